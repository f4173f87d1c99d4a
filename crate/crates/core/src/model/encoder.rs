use rand::Rng as _;

use super::ops::{
    add_bias, axpy, bias_grad, gelu, gelu_grad, layer_norm, layer_norm_backward, matmul,
    matmul_at_acc, matmul_bt, softmax,
};
use super::{LayerParams, ModelParams};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug)]
struct LayerCache {
    x_in: Vec<f64>,
    ln1_xhat: Vec<f64>,
    ln1_rstd: Vec<f64>,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// heads × n × n attention weights
    probs: Vec<f64>,
    ctx: Vec<f64>,
    attn_mask: Option<Vec<f64>>,
    ln2_xhat: Vec<f64>,
    ln2_rstd: Vec<f64>,
    b: Vec<f64>,
    f_pre: Vec<f64>,
    f_act: Vec<f64>,
    ffn_mask: Option<Vec<f64>>,
}

/// Activations kept from the forward pass.
#[derive(Clone, Debug)]
pub struct EncoderCache {
    ids: Vec<u32>,
    layers: Vec<LayerCache>,
    final_xhat: Vec<f64>,
    final_rstd: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct EncoderOutput {
    /// `n × d` hidden states, row-major.
    pub hidden: Vec<f64>,
    pub n: usize,
    pub d: usize,
    pub cache: EncoderCache,
}

impl EncoderOutput {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.hidden[i * self.d..(i + 1) * self.d]
    }
}

/// Columns `off..off + dh` of an `n × d` matrix, as a `dh × n` matrix.
fn head_transposed(x: &[f64], n: usize, d: usize, off: usize, dh: usize) -> Vec<f64> {
    let mut t = vec![0.0; dh * n];
    for j in 0..n {
        for (s, &v) in x[j * d + off..j * d + off + dh].iter().enumerate() {
            t[s * n + j] = v;
        }
    }
    t
}

fn dropout_mask(len: usize, rate: f64, rng: &mut Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

pub fn forward(params: &ModelParams, ids: &[u32]) -> Result<EncoderOutput> {
    forward_with_dropout(params, ids, None)
}

/// Forward pass. Dropout is applied to the attention and feed-forward
/// branches only when `rng` is given and the configured rate is positive.
pub fn forward_with_dropout(
    params: &ModelParams,
    ids: &[u32],
    mut rng: Option<&mut Rng>,
) -> Result<EncoderOutput> {
    let cfg = &params.config;
    let (n, d, f) = (ids.len(), cfg.hidden, cfg.ffn);
    if n > cfg.max_positions {
        return Err(Error::Shape(format!(
            "{n} tokens exceed {} positions",
            cfg.max_positions
        )));
    }
    let mut x = vec![0.0; n * d];
    for (i, &id) in ids.iter().enumerate() {
        if id as usize >= cfg.vocab_size {
            return Err(Error::TokenOutOfRange {
                id,
                vocab_size: cfg.vocab_size,
            });
        }
        let tok = &params.token_embedding[id as usize * d..(id as usize + 1) * d];
        let pos = &params.position_embedding[i * d..(i + 1) * d];
        for j in 0..d {
            x[i * d + j] = tok[j] + pos[j];
        }
    }

    let heads = cfg.heads;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut layers = Vec::with_capacity(cfg.layers);
    for lp in &params.layers {
        let mut a = vec![0.0; n * d];
        let (ln1_xhat, ln1_rstd) = layer_norm(&x, &lp.ln1_gain, &lp.ln1_bias, &mut a);
        let mut q = vec![0.0; n * d];
        let mut k = vec![0.0; n * d];
        let mut v = vec![0.0; n * d];
        matmul(&a, &lp.wq, n, d, d, &mut q);
        add_bias(&mut q, &lp.bq);
        matmul(&a, &lp.wk, n, d, d, &mut k);
        add_bias(&mut k, &lp.bk);
        matmul(&a, &lp.wv, n, d, d, &mut v);
        add_bias(&mut v, &lp.bv);

        let mut probs = vec![0.0; heads * n * n];
        let mut ctx = vec![0.0; n * d];
        for h in 0..heads {
            let off = h * dh;
            let kt = head_transposed(&k, n, d, off, dh);
            for i in 0..n {
                let row = &mut probs[(h * n + i) * n..(h * n + i + 1) * n];
                for (t, &qv) in q[i * d + off..i * d + off + dh].iter().enumerate() {
                    axpy(qv, &kt[t * n..(t + 1) * n], row);
                }
                row.iter_mut().for_each(|p| *p *= scale);
                softmax(row);
                let out = &mut ctx[i * d + off..i * d + off + dh];
                for (j, &p) in row.iter().enumerate() {
                    axpy(p, &v[j * d + off..j * d + off + dh], out);
                }
            }
        }
        let mut o = vec![0.0; n * d];
        matmul(&ctx, &lp.wo, n, d, d, &mut o);
        add_bias(&mut o, &lp.bo);
        let attn_mask = match rng.as_deref_mut() {
            Some(r) if cfg.dropout > 0.0 => Some(dropout_mask(n * d, cfg.dropout, r)),
            _ => None,
        };
        if let Some(m) = &attn_mask {
            o.iter_mut().zip(m).for_each(|(v, m)| *v *= m);
        }
        let x_in = x.clone();
        for (xv, ov) in x.iter_mut().zip(&o) {
            *xv += ov;
        }

        let mut b = vec![0.0; n * d];
        let (ln2_xhat, ln2_rstd) = layer_norm(&x, &lp.ln2_gain, &lp.ln2_bias, &mut b);
        let mut f_pre = vec![0.0; n * f];
        matmul(&b, &lp.w1, n, d, f, &mut f_pre);
        add_bias(&mut f_pre, &lp.b1);
        let f_act: Vec<f64> = f_pre.iter().map(|&z| gelu(z)).collect();
        let mut out = vec![0.0; n * d];
        matmul(&f_act, &lp.w2, n, f, d, &mut out);
        add_bias(&mut out, &lp.b2);
        let ffn_mask = match rng.as_deref_mut() {
            Some(r) if cfg.dropout > 0.0 => Some(dropout_mask(n * d, cfg.dropout, r)),
            _ => None,
        };
        if let Some(m) = &ffn_mask {
            out.iter_mut().zip(m).for_each(|(v, m)| *v *= m);
        }
        for (xv, ov) in x.iter_mut().zip(&out) {
            *xv += ov;
        }
        layers.push(LayerCache {
            x_in,
            ln1_xhat,
            ln1_rstd,
            a,
            q,
            k,
            v,
            probs,
            ctx,
            attn_mask,
            ln2_xhat,
            ln2_rstd,
            b,
            f_pre,
            f_act,
            ffn_mask,
        });
    }

    let mut hidden = vec![0.0; n * d];
    let (final_xhat, final_rstd) = layer_norm(
        &x,
        &params.final_ln_gain,
        &params.final_ln_bias,
        &mut hidden,
    );
    Ok(EncoderOutput {
        hidden,
        n,
        d,
        cache: EncoderCache {
            ids: ids.to_vec(),
            layers,
            final_xhat,
            final_rstd,
        },
    })
}

fn layer_backward(
    lp: &LayerParams,
    gl: &mut LayerParams,
    c: &LayerCache,
    dx: &mut [f64],
    n: usize,
    d: usize,
    f: usize,
    heads: usize,
) {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    // feed-forward branch
    let mut df = dx.to_vec();
    if let Some(m) = &c.ffn_mask {
        df.iter_mut().zip(m).for_each(|(g, m)| *g *= m);
    }
    matmul_at_acc(&c.f_act, &df, n, f, d, &mut gl.w2);
    bias_grad(&df, &mut gl.b2);
    let mut dact = vec![0.0; n * f];
    matmul_bt(&df, &lp.w2, n, d, f, &mut dact);
    for (g, &z) in dact.iter_mut().zip(&c.f_pre) {
        *g *= gelu_grad(z);
    }
    matmul_at_acc(&c.b, &dact, n, d, f, &mut gl.w1);
    bias_grad(&dact, &mut gl.b1);
    let mut db = vec![0.0; n * d];
    matmul_bt(&dact, &lp.w1, n, f, d, &mut db);
    let mut dmid = vec![0.0; n * d];
    layer_norm_backward(
        &db,
        &c.ln2_xhat,
        &c.ln2_rstd,
        &lp.ln2_gain,
        &mut gl.ln2_gain,
        &mut gl.ln2_bias,
        &mut dmid,
    );
    for (g, m) in dx.iter_mut().zip(&dmid) {
        *g += m;
    }

    // attention branch
    let mut dout = dx.to_vec();
    if let Some(m) = &c.attn_mask {
        dout.iter_mut().zip(m).for_each(|(g, m)| *g *= m);
    }
    matmul_at_acc(&c.ctx, &dout, n, d, d, &mut gl.wo);
    bias_grad(&dout, &mut gl.bo);
    let mut dctx = vec![0.0; n * d];
    matmul_bt(&dout, &lp.wo, n, d, d, &mut dctx);

    let mut dq = vec![0.0; n * d];
    let mut dk = vec![0.0; n * d];
    let mut dv = vec![0.0; n * d];
    let mut dp = vec![0.0; n];
    for h in 0..heads {
        let off = h * dh;
        let vt = head_transposed(&c.v, n, d, off, dh);
        for i in 0..n {
            let p = &c.probs[(h * n + i) * n..(h * n + i + 1) * n];
            let dci = &dctx[i * d + off..i * d + off + dh];
            dp.fill(0.0);
            for (t, &g) in dci.iter().enumerate() {
                axpy(g, &vt[t * n..(t + 1) * n], &mut dp);
            }
            for (j, &pj) in p.iter().enumerate() {
                axpy(pj, dci, &mut dv[j * d + off..j * d + off + dh]);
            }
            let inner: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
            let qi = &c.q[i * d + off..i * d + off + dh];
            let dqi = &mut dq[i * d + off..i * d + off + dh];
            for j in 0..n {
                let ds = p[j] * (dp[j] - inner) * scale;
                axpy(ds, &c.k[j * d + off..j * d + off + dh], dqi);
                axpy(ds, qi, &mut dk[j * d + off..j * d + off + dh]);
            }
        }
    }
    matmul_at_acc(&c.a, &dq, n, d, d, &mut gl.wq);
    bias_grad(&dq, &mut gl.bq);
    matmul_at_acc(&c.a, &dk, n, d, d, &mut gl.wk);
    bias_grad(&dk, &mut gl.bk);
    matmul_at_acc(&c.a, &dv, n, d, d, &mut gl.wv);
    bias_grad(&dv, &mut gl.bv);
    let mut da = vec![0.0; n * d];
    let mut tmp = vec![0.0; n * d];
    for (g, w) in [(&dq, &lp.wq), (&dk, &lp.wk), (&dv, &lp.wv)] {
        matmul_bt(g, w, n, d, d, &mut tmp);
        da.iter_mut().zip(&tmp).for_each(|(a, t)| *a += t);
    }
    let mut dxin = vec![0.0; n * d];
    layer_norm_backward(
        &da,
        &c.ln1_xhat,
        &c.ln1_rstd,
        &lp.ln1_gain,
        &mut gl.ln1_gain,
        &mut gl.ln1_bias,
        &mut dxin,
    );
    debug_assert_eq!(c.x_in.len(), dxin.len());
    for (g, m) in dx.iter_mut().zip(&dxin) {
        *g += m;
    }
}

/// Backpropagates `d_hidden` (`n × d`) through the encoder, accumulating
/// into `grads`.
pub fn backward(
    params: &ModelParams,
    out: &EncoderOutput,
    d_hidden: &[f64],
    grads: &mut ModelParams,
) -> Result<()> {
    let cfg = &params.config;
    let (n, d) = (out.n, out.d);
    if d != cfg.hidden || out.cache.layers.len() != cfg.layers || grads.config != *cfg {
        return Err(Error::Shape(
            "encoder cache does not match the model configuration".into(),
        ));
    }
    if d_hidden.len() != n * d {
        return Err(Error::Shape(format!(
            "hidden gradient has {} entries, expected {}",
            d_hidden.len(),
            n * d
        )));
    }
    let mut dx = vec![0.0; n * d];
    layer_norm_backward(
        d_hidden,
        &out.cache.final_xhat,
        &out.cache.final_rstd,
        &params.final_ln_gain,
        &mut grads.final_ln_gain,
        &mut grads.final_ln_bias,
        &mut dx,
    );
    for ((lp, gl), c) in params
        .layers
        .iter()
        .zip(grads.layers.iter_mut())
        .zip(&out.cache.layers)
        .rev()
    {
        layer_backward(lp, gl, c, &mut dx, n, d, cfg.ffn, cfg.heads);
    }
    for (i, &id) in out.cache.ids.iter().enumerate() {
        let row = &dx[i * d..(i + 1) * d];
        for (g, &x) in grads.token_embedding[id as usize * d..(id as usize + 1) * d]
            .iter_mut()
            .zip(row)
        {
            *g += x;
        }
        for (g, &x) in grads.position_embedding[i * d..(i + 1) * d]
            .iter_mut()
            .zip(row)
        {
            *g += x;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig};

    fn cfg() -> ModelConfig {
        ModelConfig {
            vocab_size: 30,
            hidden: 8,
            layers: 2,
            heads: 2,
            ffn: 12,
            max_positions: 10,
            dropout: 0.0,
        }
    }

    // Weighted sum of hidden states as a scalar probe for finite differences.
    fn probe_loss(params: &ModelParams, ids: &[u32], w: &[f64]) -> f64 {
        let out = forward(params, ids).unwrap();
        out.hidden.iter().zip(w).map(|(h, w)| h * w).sum()
    }

    #[test]
    fn shapes_and_errors() {
        let p = init_params(&cfg(), 0).unwrap();
        let out = forward(&p, &[7]).unwrap();
        assert_eq!((out.n, out.hidden.len()), (1, 8));
        assert!(out.hidden.iter().all(|v| v.is_finite()));
        assert!(matches!(
            forward(&p, &[30]),
            Err(Error::TokenOutOfRange { .. })
        ));
        assert!(forward(&p, &[1; 11]).is_err());
    }

    #[test]
    fn sequences_are_independent() {
        let p = init_params(&cfg(), 1).unwrap();
        let a = forward(&p, &[3, 9, 12, 4]).unwrap().hidden;
        let b = forward(&p, &[3, 20, 4]).unwrap().hidden;
        let b2 = forward(&p, &[3, 20, 4]).unwrap().hidden;
        let a2 = forward(&p, &[3, 9, 12, 4]).unwrap().hidden;
        assert_eq!(a, a2);
        assert_eq!(b, b2);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let p = init_params(&cfg(), 2).unwrap();
        let out = forward(&p, &[3, 5, 6, 4]).unwrap();
        let mut g = p.zeros_like();
        backward(&p, &out, &vec![0.0; out.hidden.len()], &mut g).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let mut p = init_params(&cfg(), 3).unwrap();
        // larger weights so gradients are well away from zero
        for (_, kind, t) in p.tensors_mut() {
            if kind == crate::model::TensorKind::Weight {
                t.iter_mut().for_each(|v| *v *= 20.0);
            }
        }
        let ids = [3u32, 11, 17, 2, 25, 4];
        let w: Vec<f64> = (0..ids.len() * 8)
            .map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0)
            .collect();
        let out = forward(&p, &ids).unwrap();
        let mut g = p.zeros_like();
        backward(&p, &out, &w, &mut g).unwrap();
        let analytic = g.flatten();
        let mut worst: f64 = 0.0;
        let mut flat_index = 0;
        let names: Vec<usize> = p.tensors().iter().map(|t| t.2.len()).collect();
        for (t, len) in names.into_iter().enumerate() {
            for e in 0..len {
                let h = 1e-5;
                let mut plus = p.clone();
                plus.tensors_mut()[t].2[e] += h;
                let mut minus = p.clone();
                minus.tensors_mut()[t].2[e] -= h;
                let fd = (probe_loss(&plus, &ids, &w) - probe_loss(&minus, &ids, &w)) / (2.0 * h);
                let a = analytic[flat_index];
                let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3);
                worst = worst.max(err);
                flat_index += 1;
            }
        }
        assert!(worst < 1e-6, "worst relative error {worst}");
    }

    #[test]
    fn dropout_masks_are_seeded() {
        let c = ModelConfig {
            dropout: 0.5,
            ..cfg()
        };
        let p = init_params(&c, 0).unwrap();
        let mut r1 = crate::rng::stream(0, crate::rng::Purpose::Dropout, 0);
        let mut r2 = crate::rng::stream(0, crate::rng::Purpose::Dropout, 0);
        let a = forward_with_dropout(&p, &[3, 5, 4], Some(&mut r1)).unwrap();
        let b = forward_with_dropout(&p, &[3, 5, 4], Some(&mut r2)).unwrap();
        assert_eq!(a.hidden, b.hidden);
        assert_ne!(a.hidden, forward(&p, &[3, 5, 4]).unwrap().hidden);
    }

    #[test]
    fn golden_hidden_checksum() {
        use sha2::{Digest, Sha256};
        let c = ModelConfig {
            vocab_size: 64,
            hidden: 16,
            layers: 2,
            heads: 2,
            ffn: 64,
            max_positions: 32,
            dropout: 0.0,
        };
        let p = init_params(&c, 7).unwrap();
        let ids: Vec<u32> = (0..20).map(|i| (i * 7 + 3) % 64).collect();
        let out = forward(&p, &ids).unwrap();
        let mut hasher = Sha256::new();
        out.hidden
            .iter()
            .for_each(|v| hasher.update(v.to_le_bytes()));
        let digest: String = hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        assert_eq!(
            digest,
            "b7dba0fddcb9f4fe0c53e1efd78258cca1805b3eaa7893d3ddda227f0d75b5b0"
        );
    }

    #[test]
    fn doubling_upstream_doubles_grads() {
        let p = init_params(&cfg(), 4).unwrap();
        let out = forward(&p, &[3, 8, 2, 19, 4]).unwrap();
        let w: Vec<f64> = (0..out.hidden.len())
            .map(|i| ((i * 13 % 7) as f64 - 3.0) / 3.0)
            .collect();
        let w2: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
        let (mut g1, mut g2) = (p.zeros_like(), p.zeros_like());
        backward(&p, &out, &w, &mut g1).unwrap();
        backward(&p, &out, &w2, &mut g2).unwrap();
        for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
            assert!((2.0 * a - b).abs() <= 1e-12);
        }
    }
}
