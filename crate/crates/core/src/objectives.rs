//! Copy-based mention reference loss, masked LM loss and their sum.
//!
//! Hidden states are passed as row-major `n × d` slices. The copy score of
//! candidate position `k` for query position `i` is `(V ⊙ h_k)ᵀ h_i`, with
//! `V` the per-dimension copy gate.

use crate::error::{Error, Result};
use crate::masking::{MrpTarget, TrainingInstance};
use crate::model::ops::{
    gelu, gelu_grad, layer_norm, layer_norm_backward, log_sum_exp, matmul, softmax,
};
use crate::model::{backward, forward_with_dropout, ModelParams};
use crate::rng::Rng;

/// Words a masked word may copy from: every body word none of whose
/// subwords is labeled. The query itself, all masked words and the special
/// positions are therefore excluded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateSet {
    pub words: Vec<(usize, usize)>,
}

impl CandidateSet {
    pub fn new(words: Vec<(usize, usize)>) -> Self {
        CandidateSet { words }
    }

    pub fn for_instance(inst: &TrainingInstance) -> Self {
        let words = inst
            .words
            .iter()
            .copied()
            .filter(|&(s, e)| (s..=e).all(|p| inst.mlm_labels[p].is_none()))
            .collect();
        CandidateSet { words }
    }

    pub fn starts(&self) -> Vec<usize> {
        self.words.iter().map(|w| w.0).collect()
    }

    pub fn ends(&self) -> Vec<usize> {
        self.words.iter().map(|w| w.1).collect()
    }

    pub fn index_of(&self, word: (usize, usize)) -> Result<usize> {
        self.words
            .iter()
            .position(|&w| w == word)
            .ok_or(Error::CandidateNotInSet {
                start: word.0,
                end: word.1,
            })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

fn row(hidden: &[f64], d: usize, i: usize) -> &[f64] {
    &hidden[i * d..(i + 1) * d]
}

fn check_rows(
    hidden: &[f64],
    d: usize,
    gate: &[f64],
    positions: impl IntoIterator<Item = usize>,
) -> Result<()> {
    if d == 0 || gate.len() != d || !hidden.len().is_multiple_of(d) {
        return Err(Error::Shape(format!(
            "hidden of {} entries, d = {d}, gate of {}",
            hidden.len(),
            gate.len()
        )));
    }
    let n = hidden.len() / d;
    for p in positions {
        if p >= n {
            return Err(Error::Shape(format!(
                "position {p} outside {n} hidden rows"
            )));
        }
    }
    Ok(())
}

/// Raw copy scores `(V ⊙ h_k)ᵀ h_i` for each candidate `k`.
pub fn copy_scores(
    hidden: &[f64],
    d: usize,
    gate: &[f64],
    i: usize,
    candidates: &[usize],
) -> Vec<f64> {
    let hi = row(hidden, d, i);
    candidates
        .iter()
        .map(|&k| {
            row(hidden, d, k)
                .iter()
                .zip(gate)
                .zip(hi)
                .map(|((a, v), b)| a * v * b)
                .sum()
        })
        .collect()
}

/// Token-level copy distribution of query `i` over `candidates`.
pub fn copy_distribution(
    hidden: &[f64],
    d: usize,
    gate: &[f64],
    i: usize,
    candidates: &[usize],
) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    check_rows(hidden, d, gate, candidates.iter().copied().chain([i]))?;
    let mut p = copy_scores(hidden, d, gate, i, candidates);
    softmax(&mut p);
    Ok(p)
}

/// Probability of copying word `candidate` into masked word `target`:
/// the start factor over candidate starts times the end factor over
/// candidate ends.
pub fn word_copy_prob(
    hidden: &[f64],
    d: usize,
    gate: &[f64],
    target: (usize, usize),
    candidate: (usize, usize),
    set: &CandidateSet,
) -> Result<f64> {
    let j = set.index_of(candidate)?;
    let ps = copy_distribution(hidden, d, gate, target.0, &set.starts())?;
    let pe = copy_distribution(hidden, d, gate, target.1, &set.ends())?;
    Ok(ps[j] * pe[j])
}

/// Word copy probabilities of `target` over every word of `set`.
pub fn word_copy_probs(
    hidden: &[f64],
    d: usize,
    gate: &[f64],
    target: (usize, usize),
    set: &CandidateSet,
) -> Result<Vec<f64>> {
    let ps = copy_distribution(hidden, d, gate, target.0, &set.starts())?;
    let pe = copy_distribution(hidden, d, gate, target.1, &set.ends())?;
    Ok(ps.iter().zip(&pe).map(|(a, b)| a * b).collect())
}

#[derive(Clone, Debug)]
pub struct MrpOutput {
    pub loss: f64,
    /// `log Σ_j Pr(w_j | w_i)` per target.
    pub log_likelihoods: Vec<f64>,
    pub d_hidden: Vec<f64>,
    pub d_gate: Vec<f64>,
}

// Adds `g · ∂score(q, k)` to the hidden and gate gradients.
fn score_backward(
    hidden: &[f64],
    d: usize,
    gate: &[f64],
    q: usize,
    k: usize,
    g: f64,
    dh: &mut [f64],
    dv: &mut [f64],
) {
    for c in 0..d {
        let (hq, hk) = (hidden[q * d + c], hidden[k * d + c]);
        dh[k * d + c] += g * gate[c] * hq;
        dh[q * d + c] += g * gate[c] * hk;
        dv[c] += g * hk * hq;
    }
}

/// Mention reference loss summed over `targets`, with exact gradients
/// with respect to the hidden states and the copy gate.
pub fn mrp_loss(
    hidden: &[f64],
    d: usize,
    gate: &[f64],
    targets: &[MrpTarget],
    set: &CandidateSet,
) -> Result<MrpOutput> {
    check_rows(hidden, d, gate, std::iter::empty())?;
    let mut out = MrpOutput {
        loss: 0.0,
        log_likelihoods: Vec::with_capacity(targets.len()),
        d_hidden: vec![0.0; hidden.len()],
        d_gate: vec![0.0; d],
    };
    if targets.is_empty() {
        return Ok(out);
    }
    if set.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let (starts, ends) = (set.starts(), set.ends());
    check_rows(hidden, d, gate, starts.iter().chain(&ends).copied())?;
    for t in targets {
        if t.referents.is_empty() {
            return Err(Error::PlanInvariant(format!(
                "MRP target ({}, {}) has no referents",
                t.start, t.end
            )));
        }
        check_rows(hidden, d, gate, [t.start, t.end])?;
        let refs = t
            .referents
            .iter()
            .map(|&w| set.index_of(w))
            .collect::<Result<Vec<_>>>()?;
        let s_scores = copy_scores(hidden, d, gate, t.start, &starts);
        let e_scores = copy_scores(hidden, d, gate, t.end, &ends);
        let (s_norm, e_norm) = (log_sum_exp(&s_scores), log_sum_exp(&e_scores));
        // log A_j = log Ps(j) + log Pe(j) over referents
        let log_a: Vec<f64> = refs
            .iter()
            .map(|&j| s_scores[j] - s_norm + e_scores[j] - e_norm)
            .collect();
        let ll = log_sum_exp(&log_a);
        out.loss -= ll;
        out.log_likelihoods.push(ll);

        // ∂L/∂score_k = P(k) − r_k with r the posterior over referents
        let mut g_s: Vec<f64> = s_scores.iter().map(|s| (s - s_norm).exp()).collect();
        let mut g_e: Vec<f64> = e_scores.iter().map(|s| (s - e_norm).exp()).collect();
        for (&j, la) in refs.iter().zip(&log_a) {
            let r = (la - ll).exp();
            g_s[j] -= r;
            g_e[j] -= r;
        }
        for (k, &g) in g_s.iter().enumerate() {
            score_backward(
                hidden,
                d,
                gate,
                t.start,
                starts[k],
                g,
                &mut out.d_hidden,
                &mut out.d_gate,
            );
        }
        for (k, &g) in g_e.iter().enumerate() {
            score_backward(
                hidden,
                d,
                gate,
                t.end,
                ends[k],
                g,
                &mut out.d_hidden,
                &mut out.d_gate,
            );
        }
    }
    Ok(out)
}

/// Gradients of the MLM head, including the tied embedding.
#[derive(Clone, Debug)]
pub struct HeadGrads {
    pub dense: Vec<f64>,
    pub dense_bias: Vec<f64>,
    pub ln_gain: Vec<f64>,
    pub ln_bias: Vec<f64>,
    pub output_bias: Vec<f64>,
    pub embedding: Vec<f64>,
}

impl HeadGrads {
    fn zeros(d: usize, v: usize) -> Self {
        HeadGrads {
            dense: vec![0.0; d * d],
            dense_bias: vec![0.0; d],
            ln_gain: vec![0.0; d],
            ln_bias: vec![0.0; d],
            output_bias: vec![0.0; v],
            embedding: vec![0.0; v * d],
        }
    }

    /// `grads += scale · self`.
    pub fn add_to(&self, grads: &mut ModelParams, scale: f64) {
        for (dst, src) in [
            (&mut grads.head_dense, &self.dense),
            (&mut grads.head_dense_bias, &self.dense_bias),
            (&mut grads.head_ln_gain, &self.ln_gain),
            (&mut grads.head_ln_bias, &self.ln_bias),
            (&mut grads.output_bias, &self.output_bias),
            (&mut grads.token_embedding, &self.embedding),
        ] {
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += scale * b);
        }
    }
}

#[derive(Clone, Debug)]
pub struct MlmOutput {
    pub loss: f64,
    /// `(position, log p(label))` per labeled position.
    pub log_likelihoods: Vec<(usize, f64)>,
    pub d_hidden: Vec<f64>,
    pub head: HeadGrads,
}

struct HeadForward {
    z: Vec<f64>,
    xhat: Vec<f64>,
    rstd: Vec<f64>,
    y: Vec<f64>,
    logits: Vec<f64>,
}

// Head applied to a single hidden row.
fn head_forward(params: &ModelParams, h: &[f64]) -> HeadForward {
    let (d, v) = (params.config.hidden, params.config.vocab_size);
    let mut z = params.head_dense_bias.clone();
    let mut tmp = vec![0.0; d];
    matmul(h, &params.head_dense, 1, d, d, &mut tmp);
    z.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
    let act: Vec<f64> = z.iter().map(|&x| gelu(x)).collect();
    let mut y = vec![0.0; d];
    let (xhat, rstd) = layer_norm(&act, &params.head_ln_gain, &params.head_ln_bias, &mut y);
    let logits = (0..v)
        .map(|t| {
            let e = &params.token_embedding[t * d..(t + 1) * d];
            e.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() + params.output_bias[t]
        })
        .collect();
    HeadForward {
        z,
        xhat,
        rstd,
        y,
        logits,
    }
}

/// Log-probabilities of the MLM head over the vocabulary at row `i`.
pub fn mlm_log_probs(hidden: &[f64], params: &ModelParams, i: usize) -> Vec<f64> {
    let d = params.config.hidden;
    let f = head_forward(params, row(hidden, d, i));
    let norm = log_sum_exp(&f.logits);
    f.logits.iter().map(|l| l - norm).collect()
}

/// Mean cross-entropy over labeled positions, with gradients. No labels
/// gives a zero loss and zero gradients.
pub fn mlm_loss(hidden: &[f64], params: &ModelParams, labels: &[Option<u32>]) -> Result<MlmOutput> {
    let (d, v) = (params.config.hidden, params.config.vocab_size);
    if hidden.len() != labels.len() * d {
        return Err(Error::Shape(format!(
            "{} hidden entries for {} labels",
            hidden.len(),
            labels.len()
        )));
    }
    let mut out = MlmOutput {
        loss: 0.0,
        log_likelihoods: Vec::new(),
        d_hidden: vec![0.0; hidden.len()],
        head: HeadGrads::zeros(d, v),
    };
    let labeled: Vec<(usize, u32)> = labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|t| (i, t)))
        .collect();
    if labeled.is_empty() {
        return Ok(out);
    }
    let m = labeled.len() as f64;
    let g = &mut out.head;
    for &(i, label) in &labeled {
        if label as usize >= v {
            return Err(Error::TokenOutOfRange {
                id: label,
                vocab_size: v,
            });
        }
        let h = row(hidden, d, i);
        let f = head_forward(params, h);
        let mut p = f.logits.clone();
        let ll = f.logits[label as usize] - log_sum_exp(&f.logits);
        out.loss -= ll / m;
        out.log_likelihoods.push((i, ll));

        softmax(&mut p);
        p[label as usize] -= 1.0;
        let mut dy = vec![0.0; d];
        for (t, &dl) in p.iter().enumerate() {
            let dl = dl / m;
            g.output_bias[t] += dl;
            let e = &params.token_embedding[t * d..(t + 1) * d];
            let ge = &mut g.embedding[t * d..(t + 1) * d];
            for c in 0..d {
                ge[c] += dl * f.y[c];
                dy[c] += dl * e[c];
            }
        }
        let mut dact = vec![0.0; d];
        layer_norm_backward(
            &dy,
            &f.xhat,
            &f.rstd,
            &params.head_ln_gain,
            &mut g.ln_gain,
            &mut g.ln_bias,
            &mut dact,
        );
        let dz: Vec<f64> = dact
            .iter()
            .zip(&f.z)
            .map(|(a, &z)| a * gelu_grad(z))
            .collect();
        let dh = &mut out.d_hidden[i * d..(i + 1) * d];
        for r in 0..d {
            for c in 0..d {
                g.dense[r * d + c] += h[r] * dz[c];
                dh[r] += params.head_dense[r * d + c] * dz[c];
            }
        }
        g.dense_bias.iter_mut().zip(&dz).for_each(|(a, b)| *a += b);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub mrp: f64,
    pub mlm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { mrp: 1.0, mlm: 1.0 }
    }
}

/// Loss of one instance. `mrp` and `mlm` are the weighted terms, so
/// `total == mrp + mlm` exactly; `raw_*` are the unweighted losses.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub mrp: f64,
    pub mlm: f64,
    pub raw_mrp: f64,
    pub raw_mlm: f64,
    pub mrp_log_likelihoods: Vec<f64>,
    pub mlm_log_likelihoods: Vec<(usize, f64)>,
}

/// Which objectives are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// Weighted mention reference and masked LM losses.
    Joint,
    /// Masked LM only; the mention reference term is never computed.
    MlmOnly,
}

fn run(
    inst: &TrainingInstance,
    params: &ModelParams,
    weights: LossWeights,
    objective: Objective,
    rng: Option<&mut Rng>,
    grads: Option<&mut ModelParams>,
) -> Result<LossBreakdown> {
    let enc = forward_with_dropout(params, &inst.input_ids, rng)?;
    let d = enc.d;
    let mlm = mlm_loss(&enc.hidden, params, &inst.mlm_labels)?;
    let mut b = LossBreakdown {
        raw_mlm: mlm.loss,
        mlm: weights.mlm * mlm.loss,
        mlm_log_likelihoods: mlm.log_likelihoods.clone(),
        ..Default::default()
    };
    let mrp = match objective {
        Objective::Joint => {
            let set = CandidateSet::for_instance(inst);
            let out = mrp_loss(&enc.hidden, d, &params.copy_gate, &inst.mrp_targets, &set)?;
            b.raw_mrp = out.loss;
            b.mrp = weights.mrp * out.loss;
            b.mrp_log_likelihoods = out.log_likelihoods.clone();
            Some(out)
        }
        Objective::MlmOnly => None,
    };
    b.total = b.mrp + b.mlm;

    if let Some(grads) = grads {
        let mut dh: Vec<f64> = mlm.d_hidden.iter().map(|g| weights.mlm * g).collect();
        mlm.head.add_to(grads, weights.mlm);
        if let Some(out) = &mrp {
            dh.iter_mut()
                .zip(&out.d_hidden)
                .for_each(|(a, g)| *a += weights.mrp * g);
            grads
                .copy_gate
                .iter_mut()
                .zip(&out.d_gate)
                .for_each(|(a, g)| *a += weights.mrp * g);
        }
        backward(params, &enc, &dh, grads)?;
    }
    Ok(b)
}

/// Forward-only loss of one instance.
pub fn total_loss(
    inst: &TrainingInstance,
    params: &ModelParams,
    weights: LossWeights,
) -> Result<LossBreakdown> {
    run(inst, params, weights, Objective::Joint, None, None)
}

/// Loss of one instance with its gradient accumulated into `grads`.
/// Dropout is active when `rng` is given.
pub fn loss_and_gradients(
    inst: &TrainingInstance,
    params: &ModelParams,
    weights: LossWeights,
    objective: Objective,
    rng: Option<&mut Rng>,
    grads: &mut ModelParams,
) -> Result<LossBreakdown> {
    run(inst, params, weights, objective, rng, Some(grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn softmax_oracle(s: &[f64]) -> Vec<f64> {
        let z: f64 = s.iter().map(|x| x.exp()).sum();
        s.iter().map(|x| x.exp() / z).collect()
    }

    #[test]
    fn copy_distribution_examples() {
        // rows: query, then three candidates
        let h = [1.0, 0.0, 2.0, 0.0, 0.0, 2.0, 1.0, 1.0];
        let p = copy_distribution(&h, 2, &[1.0, 1.0], 0, &[1, 2, 3]).unwrap();
        let want = softmax_oracle(&[2.0, 0.0, 1.0]);
        for (a, b) in p.iter().zip(&want) {
            assert!((a - b).abs() < 1e-15);
        }
        let same = [0.3, 0.1, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5];
        let p = copy_distribution(&same, 2, &[1.0, 1.0], 0, &[1, 2, 3]).unwrap();
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(
            copy_distribution(&h, 2, &[1.0, 1.0], 0, &[2]).unwrap(),
            vec![1.0]
        );
        assert!(matches!(
            copy_distribution(&h, 2, &[1.0, 1.0], 0, &[]),
            Err(Error::EmptyCandidates)
        ));
    }

    #[test]
    fn word_probability_factorizes() {
        let d = 2;
        let h = [
            0.4, -0.2, 1.0, 0.3, -0.5, 0.8, 0.2, 0.9, 0.7, -0.1, 0.3, 0.3,
        ];
        let gate = [1.5, 0.5];
        let set = CandidateSet::new(vec![(2, 3), (4, 5)]);
        let p = word_copy_prob(&h, d, &gate, (0, 1), (4, 5), &set).unwrap();
        let s = copy_distribution(&h, d, &gate, 0, &[2, 4]).unwrap();
        let e = copy_distribution(&h, d, &gate, 1, &[3, 5]).unwrap();
        assert!((p - s[1] * e[1]).abs() < 1e-15);
        // single-subword words square the token probability
        let single = CandidateSet::new(vec![(2, 2), (4, 4)]);
        let p = word_copy_prob(&h, d, &gate, (0, 0), (2, 2), &single).unwrap();
        let tok = copy_distribution(&h, d, &gate, 0, &[2, 4]).unwrap()[0];
        assert!((p - tok * tok).abs() < 1e-15);
        let only = CandidateSet::new(vec![(2, 3)]);
        assert_eq!(
            word_copy_prob(&h, d, &gate, (0, 1), (2, 3), &only).unwrap(),
            1.0
        );
        assert!(matches!(
            word_copy_prob(&h, d, &gate, (0, 1), (1, 1), &set),
            Err(Error::CandidateNotInSet { start: 1, end: 1 })
        ));
    }

    #[test]
    fn mrp_loss_examples() {
        let d = 2;
        let h = [0.4, -0.2, 1.0, 0.3, -0.5, 0.8, 0.2, 0.9];
        let gate = [1.0, 1.0];
        let set = CandidateSet::new(vec![(1, 1), (2, 2), (3, 3)]);
        let t = MrpTarget {
            start: 0,
            end: 0,
            referents: vec![(1, 1), (3, 3)],
        };
        let out = mrp_loss(&h, d, &gate, &[t], &set).unwrap();
        let p = softmax_oracle(&copy_scores(&h, d, &gate, 0, &[1, 2, 3]));
        let want = -(p[0] * p[0] + p[2] * p[2]).ln();
        assert!((out.loss - want).abs() < 1e-14);

        let empty = mrp_loss(&h, d, &gate, &[], &set).unwrap();
        assert_eq!(empty.loss, 0.0);
        assert!(empty
            .d_hidden
            .iter()
            .chain(&empty.d_gate)
            .all(|&g| g == 0.0));

        let one = CandidateSet::new(vec![(1, 1)]);
        let t = MrpTarget {
            start: 0,
            end: 0,
            referents: vec![(1, 1)],
        };
        assert_eq!(mrp_loss(&h, d, &gate, &[t], &one).unwrap().loss, 0.0);

        let bad = MrpTarget {
            start: 0,
            end: 0,
            referents: vec![],
        };
        assert!(matches!(
            mrp_loss(&h, d, &gate, &[bad], &set),
            Err(Error::PlanInvariant(_))
        ));
    }

    #[test]
    fn mrp_gradients_match_finite_differences() {
        let d = 3;
        let h: Vec<f64> = (0..8 * d)
            .map(|i| ((i * 7919 % 23) as f64 - 11.0) / 9.0)
            .collect();
        let gate = vec![0.7, 1.3, -0.4];
        let set = CandidateSet::new(vec![(1, 2), (3, 3), (6, 7)]);
        let targets = [
            MrpTarget {
                start: 4,
                end: 5,
                referents: vec![(1, 2), (6, 7)],
            },
            MrpTarget {
                start: 0,
                end: 0,
                referents: vec![(3, 3)],
            },
        ];
        let out = mrp_loss(&h, d, &gate, &targets, &set).unwrap();
        let f = |h: &[f64], g: &[f64]| mrp_loss(h, d, g, &targets, &set).unwrap().loss;
        let eps = 1e-5;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
        for k in 0..h.len() {
            let (mut p, mut m) = (h.clone(), h.clone());
            p[k] += eps;
            m[k] -= eps;
            let fd = (f(&p, &gate) - f(&m, &gate)) / (2.0 * eps);
            assert!(
                rel(out.d_hidden[k], fd) < 1e-6,
                "h[{k}]: {} vs {fd}",
                out.d_hidden[k]
            );
        }
        for c in 0..d {
            let (mut p, mut m) = (gate.clone(), gate.clone());
            p[c] += eps;
            m[c] -= eps;
            let fd = (f(&h, &p) - f(&h, &m)) / (2.0 * eps);
            assert!(rel(out.d_gate[c], fd) < 1e-6);
        }
    }

    #[test]
    fn mlm_loss_examples() {
        use crate::model::{init_params, ModelConfig};
        let cfg = ModelConfig {
            vocab_size: 10,
            hidden: 4,
            layers: 1,
            heads: 1,
            ffn: 4,
            max_positions: 8,
            dropout: 0.0,
        };
        let mut p = init_params(&cfg, 0).unwrap();
        // zero embedding and bias give uniform logits
        p.token_embedding.fill(0.0);
        let h = vec![0.3; 8];
        let out = mlm_loss(&h, &p, &[None, Some(3)]).unwrap();
        assert!((out.loss - (10f64).ln()).abs() < 1e-12);
        let none = mlm_loss(&h, &p, &[None, None]).unwrap();
        assert_eq!(none.loss, 0.0);

        let p = init_params(&cfg, 1).unwrap();
        let h: Vec<f64> = (0..8).map(|i| i as f64 / 4.0 - 1.0).collect();
        let out = mlm_loss(&h, &p, &[Some(2), Some(7)]).unwrap();
        let a = -mlm_log_probs(&h, &p, 0)[2];
        let b = -mlm_log_probs(&h, &p, 1)[7];
        assert!((out.loss - (a + b) / 2.0).abs() < 1e-14);
    }
}
