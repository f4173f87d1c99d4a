//! Coreferential recovery probes.
//!
//! Recovery hides a mention and ranks candidate context words with the copy
//! head. Disambiguation substitutes each candidate string for the hidden
//! word and scores it with the masked LM head.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::masking::TrainingInstance;
use crate::model::{forward, ModelParams};
use crate::objectives::{mlm_log_probs, word_copy_probs, CandidateSet};
use crate::rng::{stream, Purpose};
use crate::synthetic::Story;
use crate::tokenizer::{tokenize, tokenize_word, Vocab};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Candidates {
    /// Word indices into the passage.
    Words(Vec<usize>),
    /// Replacement strings.
    Strings(Vec<String>),
}

impl Candidates {
    pub fn len(&self) -> usize {
        match self {
            Candidates::Words(w) => w.len(),
            Candidates::Strings(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProbeItem {
    pub passage: Vec<String>,
    pub mask_word: usize,
    pub candidates: Candidates,
    pub gold: usize,
}

impl ProbeItem {
    pub fn validate(&self) -> Result<()> {
        let n = self.passage.len();
        if self.mask_word >= n {
            return Err(Error::Probe(format!(
                "mask word {} outside a passage of {n} words",
                self.mask_word
            )));
        }
        if self.candidates.is_empty() || self.gold >= self.candidates.len() {
            return Err(Error::Probe(format!(
                "gold index {} outside {} candidates",
                self.gold,
                self.candidates.len()
            )));
        }
        if let Candidates::Words(w) = &self.candidates {
            if let Some(&bad) = w.iter().find(|&&c| c >= n || c == self.mask_word) {
                return Err(Error::Probe(format!(
                    "candidate word {bad} is outside the passage or is the masked word"
                )));
            }
        }
        Ok(())
    }
}

/// Which reading of the candidate field a probe file uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeMode {
    Recovery,
    Disambiguation,
}

/// One item per line: passage, mask-word index, `|`-separated candidates,
/// gold index, separated by tabs.
pub fn parse_probe_line(line: &str, mode: ProbeMode) -> Result<ProbeItem> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != 4 {
        return Err(Error::Probe(format!(
            "expected 4 tab-separated fields, found {}",
            f.len()
        )));
    }
    let index = |s: &str, what: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| Error::Probe(format!("bad {what}: {s:?}")))
    };
    let parts = f[2].split('|');
    let candidates = match mode {
        ProbeMode::Recovery => Candidates::Words(
            parts
                .map(|p| index(p, "candidate index"))
                .collect::<Result<_>>()?,
        ),
        ProbeMode::Disambiguation => {
            Candidates::Strings(parts.map(|p| p.trim().to_string()).collect())
        }
    };
    let item = ProbeItem {
        passage: f[0].split_whitespace().map(String::from).collect(),
        mask_word: index(f[1], "mask-word index")?,
        candidates,
        gold: index(f[3], "gold index")?,
    };
    item.validate()?;
    Ok(item)
}

pub fn format_probe_line(item: &ProbeItem) -> String {
    let cands = match &item.candidates {
        Candidates::Words(w) => w.iter().map(usize::to_string).collect::<Vec<_>>().join("|"),
        Candidates::Strings(s) => s.join("|"),
    };
    format!(
        "{}\t{}\t{}\t{}",
        item.passage.join(" "),
        item.mask_word,
        cands,
        item.gold
    )
}

pub fn read_probe_file(path: impl AsRef<Path>, mode: ProbeMode) -> Result<Vec<ProbeItem>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_probe_line(l, mode)
                .map_err(|e| Error::Probe(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn write_probe_file(path: impl AsRef<Path>, items: &[ProbeItem]) -> Result<()> {
    let path = path.as_ref();
    let text: String = items.iter().map(|i| format_probe_line(i) + "\n").collect();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// The passage as a model input with every subword of the masked word
/// replaced by `[MASK]`, plus the masked span and all word spans.
fn masked_input(item: &ProbeItem, vocab: &Vocab) -> (TrainingInstance, (usize, usize)) {
    let seq = tokenize(&item.passage, vocab);
    let mut input_ids = Vec::with_capacity(seq.len() + 2);
    input_ids.push(Vocab::CLS_ID);
    input_ids.extend(&seq.token_ids);
    input_ids.push(Vocab::SEP_ID);
    let mut mlm_labels = vec![None; input_ids.len()];
    let span = seq.words[item.mask_word];
    for p in span.positions() {
        mlm_labels[p + 1] = Some(input_ids[p + 1]);
        input_ids[p + 1] = Vocab::MASK_ID;
    }
    let inst = TrainingInstance {
        input_ids,
        mlm_labels,
        mrp_targets: vec![],
        words: seq.words.iter().map(|w| (w.start + 1, w.end + 1)).collect(),
        masked: vec![],
        eligible_groups: 0,
    };
    (inst, (span.start + 1, span.end + 1))
}

/// Candidate indices sorted by descending score; equal scores keep the
/// lower index first.
pub fn rank(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Copy-head probabilities of each candidate word for the masked word.
pub fn recovery_scores(params: &ModelParams, vocab: &Vocab, item: &ProbeItem) -> Result<Vec<f64>> {
    item.validate()?;
    let Candidates::Words(cands) = &item.candidates else {
        return Err(Error::Probe("recovery needs word-index candidates".into()));
    };
    let (inst, target) = masked_input(item, vocab);
    let enc = forward(params, &inst.input_ids)?;
    let set = CandidateSet::for_instance(&inst);
    let probs = word_copy_probs(&enc.hidden, enc.d, &params.copy_gate, target, &set)?;
    cands
        .iter()
        .map(|&c| set.index_of(inst.words[c]).map(|j| probs[j]))
        .collect()
}

/// Ranking of the candidate words by copy probability.
pub fn recover_mention(
    params: &ModelParams,
    vocab: &Vocab,
    item: &ProbeItem,
) -> Result<Vec<usize>> {
    Ok(rank(&recovery_scores(params, vocab, item)?))
}

/// Whether the masked LM head's argmax at every masked subword spells the
/// gold candidate exactly.
pub fn mlm_argmax_recovers(params: &ModelParams, vocab: &Vocab, item: &ProbeItem) -> Result<bool> {
    item.validate()?;
    let Candidates::Words(cands) = &item.candidates else {
        return Err(Error::Probe("recovery needs word-index candidates".into()));
    };
    let gold_ids = tokenize_word(&item.passage[cands[item.gold]], vocab);
    let (inst, (s, e)) = masked_input(item, vocab);
    let enc = forward(params, &inst.input_ids)?;
    let predicted: Vec<u32> = (s..=e)
        .map(|p| {
            let lp = mlm_log_probs(&enc.hidden, params, p);
            rank(&lp)[0] as u32
        })
        .collect();
    Ok(predicted == gold_ids)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RecoveryReport {
    pub items: usize,
    pub accuracy_at_1: f64,
    pub mrr: f64,
}

/// Accuracy@1 and mean reciprocal rank of copy-head recovery.
pub fn evaluate_recovery(
    params: &ModelParams,
    vocab: &Vocab,
    items: &[ProbeItem],
) -> Result<RecoveryReport> {
    let ranks: Vec<usize> = items
        .par_iter()
        .map(|item| {
            recover_mention(params, vocab, item)
                .map(|r| r.iter().position(|&c| c == item.gold).unwrap() + 1)
        })
        .collect::<Result<_>>()?;
    let n = ranks.len().max(1) as f64;
    Ok(RecoveryReport {
        items: ranks.len(),
        accuracy_at_1: ranks.iter().filter(|&&r| r == 1).count() as f64 / n,
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
    })
}

/// Fraction of items whose gold word the MLM argmax reproduces.
pub fn evaluate_mlm_recovery(
    params: &ModelParams,
    vocab: &Vocab,
    items: &[ProbeItem],
) -> Result<f64> {
    let hits: Vec<bool> = items
        .par_iter()
        .map(|i| mlm_argmax_recovers(params, vocab, i))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len().max(1) as f64)
}

/// Length-normalized masked LM score of each candidate string substituted
/// for the masked word. Each candidate re-tokenizes the passage.
pub fn disambiguation_scores(
    params: &ModelParams,
    vocab: &Vocab,
    passage: &[String],
    mask_word: usize,
    candidates: &[String],
) -> Result<Vec<f64>> {
    if mask_word >= passage.len() {
        return Err(Error::Probe(format!(
            "mask word {mask_word} outside a passage of {} words",
            passage.len()
        )));
    }
    candidates
        .iter()
        .map(|cand| {
            let pieces: Vec<u32> = cand
                .split_whitespace()
                .flat_map(|w| tokenize_word(w, vocab))
                .collect();
            if pieces.is_empty() {
                return Err(Error::Probe(format!("candidate {cand:?} has no subwords")));
            }
            let before = tokenize(&passage[..mask_word], vocab);
            let after = tokenize(&passage[mask_word + 1..], vocab);
            let mut ids = vec![Vocab::CLS_ID];
            ids.extend(&before.token_ids);
            let first = ids.len();
            ids.extend(std::iter::repeat_n(Vocab::MASK_ID, pieces.len()));
            ids.extend(&after.token_ids);
            ids.push(Vocab::SEP_ID);
            let enc = forward(params, &ids)?;
            let total: f64 = pieces
                .iter()
                .enumerate()
                .map(|(k, &t)| mlm_log_probs(&enc.hidden, params, first + k)[t as usize])
                .sum();
            Ok(total / pieces.len() as f64)
        })
        .collect()
}

/// Index of the best candidate string; ties go to the lower index.
pub fn disambiguate(
    params: &ModelParams,
    vocab: &Vocab,
    passage: &[String],
    mask_word: usize,
    candidates: &[String],
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    Ok(rank(&disambiguation_scores(
        params, vocab, passage, mask_word, candidates,
    )?)[0])
}

/// Disambiguation accuracy over items with string candidates.
pub fn evaluate_disambiguation(
    params: &ModelParams,
    vocab: &Vocab,
    items: &[ProbeItem],
) -> Result<f64> {
    let hits: Vec<bool> = items
        .par_iter()
        .map(|item| {
            let Candidates::Strings(c) = &item.candidates else {
                return Err(Error::Probe(
                    "disambiguation needs string candidates".into(),
                ));
            };
            Ok(disambiguate(params, vocab, &item.passage, item.mask_word, c)? == item.gold)
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len().max(1) as f64)
}

/// One recovery item per story: a later name mention is hidden and the
/// candidates are the introductions of every person.
pub fn recovery_items(stories: &[Story], seed: u64) -> Vec<ProbeItem> {
    stories
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.references.is_empty())
        .map(|(i, s)| {
            let mut rng = stream(seed, Purpose::Probe, i as u64);
            let (person, word) = s.references[rng.gen_range(0..s.references.len())];
            ProbeItem {
                passage: s.words.iter().map(|w| w.word.clone()).collect(),
                mask_word: word,
                candidates: Candidates::Words(s.intros.clone()),
                gold: person,
            }
        })
        .collect()
}

/// The same items with the candidate names spelled out, for
/// disambiguation.
pub fn disambiguation_items(recovery: &[ProbeItem]) -> Vec<ProbeItem> {
    recovery
        .iter()
        .filter_map(|item| match &item.candidates {
            Candidates::Words(w) => Some(ProbeItem {
                candidates: Candidates::Strings(
                    w.iter().map(|&c| item.passage[c].clone()).collect(),
                ),
                ..item.clone()
            }),
            Candidates::Strings(_) => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig};
    use crate::synthetic::{generate_stories, StoryConfig};
    use crate::tokenizer::build_vocab;

    fn setup() -> (Vec<Story>, Vocab, ModelParams) {
        let stories = generate_stories(&StoryConfig::default(), 7, 200);
        let vocab = build_vocab(stories.iter().flat_map(|s| s.surface()), 200).unwrap();
        let cfg = ModelConfig {
            vocab_size: vocab.len(),
            hidden: 8,
            layers: 1,
            heads: 2,
            ffn: 8,
            max_positions: 128,
            dropout: 0.0,
        };
        (stories, vocab, init_params(&cfg, 0).unwrap())
    }

    #[test]
    fn probe_lines_round_trip() {
        let (stories, _, _) = setup();
        let items = recovery_items(&stories[..5], 0);
        for item in items.iter().chain(&disambiguation_items(&items)) {
            let mode = match item.candidates {
                Candidates::Words(_) => ProbeMode::Recovery,
                Candidates::Strings(_) => ProbeMode::Disambiguation,
            };
            assert_eq!(
                &parse_probe_line(&format_probe_line(item), mode).unwrap(),
                item
            );
        }
        assert!(parse_probe_line("a b c\t1\t1\t0", ProbeMode::Recovery).is_err());
        assert!(parse_probe_line("a b c\t1\t0|2\t2", ProbeMode::Recovery).is_err());
        assert!(parse_probe_line("a b c\t1\t0|7\t0", ProbeMode::Recovery).is_err());
    }

    #[test]
    fn recovery_single_candidate_and_chance() {
        let (stories, vocab, params) = setup();
        let mut items = recovery_items(&stories, 1);
        let report = evaluate_recovery(&params, &vocab, &items).unwrap();
        assert_eq!(report.items, 200);
        assert!((0.1..=0.45).contains(&report.accuracy_at_1), "{report:?}");
        for item in &mut items {
            if let Candidates::Words(w) = &mut item.candidates {
                *w = vec![w[item.gold]];
            }
            item.gold = 0;
        }
        assert_eq!(
            evaluate_recovery(&params, &vocab, &items)
                .unwrap()
                .accuracy_at_1,
            1.0
        );
    }

    #[test]
    fn ranking_ignores_candidate_order() {
        let (stories, vocab, params) = setup();
        let item = recovery_items(&stories[..1], 0).remove(0);
        let scores = recovery_scores(&params, &vocab, &item).unwrap();
        let Candidates::Words(w) = &item.candidates else {
            unreachable!()
        };
        let reversed = ProbeItem {
            candidates: Candidates::Words(w.iter().rev().copied().collect()),
            gold: w.len() - 1 - item.gold,
            ..item.clone()
        };
        let rev_scores = recovery_scores(&params, &vocab, &reversed).unwrap();
        let back: Vec<f64> = rev_scores.into_iter().rev().collect();
        assert_eq!(scores, back);
    }

    #[test]
    fn disambiguation_ties_and_errors() {
        let (stories, vocab, params) = setup();
        let passage = stories[0]
            .surface()
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>();
        let same = vec!["cat".to_string(), "cat".to_string()];
        assert_eq!(
            disambiguate(&params, &vocab, &passage, 0, &same).unwrap(),
            0
        );
        let empty = vec!["cat".to_string(), "".to_string()];
        assert!(matches!(
            disambiguate(&params, &vocab, &passage, 0, &empty),
            Err(Error::Probe(_))
        ));
        assert!(disambiguate(&params, &vocab, &passage, 0, &[]).is_err());
    }
}
