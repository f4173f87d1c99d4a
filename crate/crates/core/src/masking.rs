//! Mention reference masking combined with random word masking.
//!
//! A plan is a list of [`MaskTarget`]s chosen under a subword budget. Words
//! picked for mention reference prediction (MRP) come from repeated noun
//! groups and keep every other occurrence of their group visible as copy
//! sources; the remaining budget goes to ordinary masked LM words.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::mentions::MentionGroup;
use crate::rng::Rng;
use crate::tokenizer::{TokenizedSequence, Vocab, WordSpan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Mrp,
    Mlm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MaskAction {
    MaskToken,
    RandomToken,
    Keep,
}

/// Selection policy, mirroring the masking ablations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum MaskingMode {
    /// Classic per-subword masking, no mention selection.
    RandomSubword,
    /// Whole word masking, no mention selection.
    Wwm,
    /// Whole word masking with mention reference selection, trained with MLM only.
    Mrm,
    /// Mention reference selection plus the copy objective.
    #[default]
    Full,
}

impl MaskingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskingMode::RandomSubword => "random_subword",
            MaskingMode::Wwm => "wwm",
            MaskingMode::Mrm => "mrm",
            MaskingMode::Full => "full",
        }
    }

    fn selects_mentions(self) -> bool {
        matches!(self, MaskingMode::Mrm | MaskingMode::Full)
    }
}

impl fmt::Display for MaskingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random_subword" => Ok(MaskingMode::RandomSubword),
            "wwm" => Ok(MaskingMode::Wwm),
            "mrm" => Ok(MaskingMode::Mrm),
            "full" => Ok(MaskingMode::Full),
            other => Err(Error::Config(format!(
                "unknown masking mode {other:?} (expected random_subword, wwm, mrm or full)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskingConfig {
    /// Fraction of subword tokens to corrupt.
    pub budget_fraction: f64,
    /// Word ratio MLM:MRP, 4:1 by default.
    pub mlm_ratio: u32,
    pub mrp_ratio: u32,
    pub mask_prob: f64,
    pub random_prob: f64,
    pub keep_prob: f64,
    pub mode: MaskingMode,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        MaskingConfig {
            budget_fraction: 0.15,
            mlm_ratio: 4,
            mrp_ratio: 1,
            mask_prob: 0.8,
            random_prob: 0.1,
            keep_prob: 0.1,
            mode: MaskingMode::Full,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("budget_fraction", self.budget_fraction),
            ("mask_prob", self.mask_prob),
            ("random_prob", self.random_prob),
            ("keep_prob", self.keep_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        let split = self.mask_prob + self.random_prob + self.keep_prob;
        if (split - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "action split must sum to 1, got {split}"
            )));
        }
        if self.mlm_ratio + self.mrp_ratio == 0 {
            return Err(Error::Config("mlm_to_mrp_ratio must not be 0:0".into()));
        }
        Ok(())
    }

    /// Probability that the next masked word is an MRP pick.
    pub fn mrp_share(&self) -> f64 {
        f64::from(self.mrp_ratio) / f64::from(self.mlm_ratio + self.mrp_ratio)
    }

    pub fn budget(&self, n: usize) -> usize {
        (self.budget_fraction * n as f64).round() as usize
    }

    /// Canonical text form, used for fingerprints.
    pub fn canonical(&self) -> String {
        format!(
            "budget_fraction={:?};mlm_to_mrp_ratio={}:{};action_split={:?}/{:?}/{:?};mode={}",
            self.budget_fraction,
            self.mlm_ratio,
            self.mrp_ratio,
            self.mask_prob,
            self.random_prob,
            self.keep_prob,
            self.mode
        )
    }

    fn sample_action(&self, rng: &mut Rng) -> MaskAction {
        let u: f64 = rng.gen();
        if u < self.mask_prob {
            MaskAction::MaskToken
        } else if u < self.mask_prob + self.random_prob {
            MaskAction::RandomToken
        } else {
            MaskAction::Keep
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskTarget {
    pub word: WordSpan,
    pub strategy: Strategy,
    pub action: MaskAction,
    /// Visible occurrences of the same noun; non-empty iff `strategy` is MRP.
    pub referents: Vec<WordSpan>,
}

fn pick<T: Copy>(items: &[T], rng: &mut Rng) -> T {
    items[rng.gen_range(0..items.len())]
}

/// Samples a masking plan for one sequence.
///
/// The budget is `round(budget_fraction * n)` subwords. Words are added one
/// at a time from those that still fit, and sampling stops once nothing
/// left fits. While an eligible noun group remains, each pick is an MRP pick
/// with probability `mrp_share`: a group uniformly, then one of its occurrences uniformly.
/// A group is consumed by its first MRP pick.
pub fn sample_plan(
    seq: &TokenizedSequence,
    groups: &[MentionGroup],
    cfg: &MaskingConfig,
    rng: &mut Rng,
) -> Vec<MaskTarget> {
    let budget = cfg.budget(seq.len());
    let mut plan = Vec::new();

    if cfg.mode == MaskingMode::RandomSubword {
        let mut positions: Vec<WordSpan> = seq
            .words
            .iter()
            .flat_map(|w| {
                w.positions().map(move |p| WordSpan {
                    word_index: w.word_index,
                    start: p,
                    end: p,
                })
            })
            .collect();
        while plan.len() < budget && !positions.is_empty() {
            let word = positions.swap_remove(rng.gen_range(0..positions.len()));
            let action = cfg.sample_action(rng);
            plan.push(MaskTarget {
                word,
                strategy: Strategy::Mlm,
                action,
                referents: Vec::new(),
            });
        }
        plan.sort_by_key(|t| t.word.start);
        return plan;
    }

    let words = &seq.words;
    let mut masked = vec![false; words.len()];
    let mut protected = vec![false; words.len()];
    let mut consumed = vec![false; groups.len()];
    let mut used = 0usize;
    let share = if cfg.mode.selects_mentions() {
        cfg.mrp_share()
    } else {
        0.0
    };

    loop {
        let room = budget - used;
        let mlm: Vec<usize> = (0..words.len())
            .filter(|&w| !masked[w] && !protected[w] && words[w].len() <= room)
            .collect();
        let mrp: Vec<usize> = if share > 0.0 {
            (0..groups.len())
                .filter(|&g| {
                    let open = groups[g]
                        .occurrences
                        .iter()
                        .filter(|&&w| !masked[w])
                        .count();
                    !consumed[g]
                        && open >= 2
                        && groups[g]
                            .occurrences
                            .iter()
                            .any(|&w| !masked[w] && words[w].len() <= room)
                })
                .collect()
        } else {
            Vec::new()
        };
        if mlm.is_empty() && mrp.is_empty() {
            break;
        }

        let take_mrp = !mrp.is_empty() && (rng.gen::<f64>() < share || mlm.is_empty());
        if take_mrp {
            let g = pick(&mrp, rng);
            let fitting: Vec<usize> = groups[g]
                .occurrences
                .iter()
                .copied()
                .filter(|&w| !masked[w] && words[w].len() <= room)
                .collect();
            let w = pick(&fitting, rng);
            let referents: Vec<WordSpan> = groups[g]
                .occurrences
                .iter()
                .filter(|&&o| o != w && !masked[o])
                .map(|&o| words[o])
                .collect();
            for &o in &groups[g].occurrences {
                if o != w && !masked[o] {
                    protected[o] = true;
                }
            }
            consumed[g] = true;
            masked[w] = true;
            used += words[w].len();
            let action = cfg.sample_action(rng);
            plan.push(MaskTarget {
                word: words[w],
                strategy: Strategy::Mrp,
                action,
                referents,
            });
        } else {
            let w = pick(&mlm, rng);
            masked[w] = true;
            used += words[w].len();
            let action = cfg.sample_action(rng);
            plan.push(MaskTarget {
                word: words[w],
                strategy: Strategy::Mlm,
                action,
                referents: Vec::new(),
            });
        }
    }
    plan.sort_by_key(|t| t.word.start);
    plan
}

/// One MRP target in instance coordinates (after the leading CLS).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MrpTarget {
    pub start: usize,
    pub end: usize,
    pub referents: Vec<(usize, usize)>,
}

/// A masked word in instance coordinates, kept for statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskedWord {
    pub start: usize,
    pub end: usize,
    pub strategy: Strategy,
    pub action: MaskAction,
}

/// A materialized, corrupted training example: `[CLS] body [SEP]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingInstance {
    pub input_ids: Vec<u32>,
    pub mlm_labels: Vec<Option<u32>>,
    pub mrp_targets: Vec<MrpTarget>,
    /// Subword span of every body word, in instance coordinates.
    pub words: Vec<(usize, usize)>,
    pub masked: Vec<MaskedWord>,
    /// Number of MRP-eligible noun groups in the source sequence.
    pub eligible_groups: usize,
}

impl TrainingInstance {
    pub fn seq_len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn body_len(&self) -> usize {
        self.input_ids.len().saturating_sub(2)
    }

    pub fn labeled_positions(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.mlm_labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|id| (i, id)))
    }

    /// Original (uncorrupted) ids.
    pub fn original_ids(&self) -> Vec<u32> {
        self.input_ids
            .iter()
            .zip(&self.mlm_labels)
            .map(|(&id, l)| l.unwrap_or(id))
            .collect()
    }

    /// Checks the structural invariants that the objectives rely on.
    pub fn validate(&self) -> Result<()> {
        let n = self.input_ids.len();
        if self.mlm_labels.len() != n {
            return Err(Error::PlanInvariant(format!(
                "{} labels for {} tokens",
                self.mlm_labels.len(),
                n
            )));
        }
        let in_body = |s: usize, e: usize| s >= 1 && s <= e && e + 1 < n;
        for &(s, e) in &self.words {
            if !in_body(s, e) {
                return Err(Error::PlanInvariant(format!(
                    "word ({s}, {e}) outside body"
                )));
            }
        }
        for t in &self.mrp_targets {
            if !in_body(t.start, t.end) {
                return Err(Error::PlanInvariant(format!(
                    "MRP target ({}, {}) outside body",
                    t.start, t.end
                )));
            }
            if t.referents.is_empty() {
                return Err(Error::PlanInvariant(format!(
                    "MRP target ({}, {}) has no referents",
                    t.start, t.end
                )));
            }
            if (t.start..=t.end).any(|p| self.mlm_labels[p].is_none()) {
                return Err(Error::PlanInvariant("MRP target without MLM labels".into()));
            }
            for &(s, e) in &t.referents {
                if !in_body(s, e) || (s..=e).any(|p| self.mlm_labels[p].is_some()) {
                    return Err(Error::PlanInvariant(format!(
                        "referent ({s}, {e}) is masked or out of range"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Corrupts the sequence according to `plan` and records the targets.
///
/// MRP targets are only recorded in [`MaskingMode::Full`]; under
/// [`MaskingMode::Mrm`] the same words are trained with the MLM loss alone.
pub fn apply_plan(
    seq: &TokenizedSequence,
    plan: &[MaskTarget],
    vocab: &Vocab,
    mode: MaskingMode,
    eligible_groups: usize,
    rng: &mut Rng,
) -> Result<TrainingInstance> {
    const OFFSET: usize = 1;
    let n = seq.len();
    let mut input_ids = Vec::with_capacity(n + 2);
    input_ids.push(Vocab::CLS_ID);
    input_ids.extend_from_slice(&seq.token_ids);
    input_ids.push(Vocab::SEP_ID);
    let mut mlm_labels = vec![None; n + 2];
    let mut mrp_targets = Vec::new();
    let mut masked = Vec::with_capacity(plan.len());
    let mut covered = vec![false; n];

    for target in plan {
        let span = target.word;
        if span.start > span.end || span.end >= n {
            return Err(Error::InvalidSpan {
                start: span.start,
                end: span.end,
                len: n,
            });
        }
        for p in span.positions() {
            if covered[p] {
                return Err(Error::PlanInvariant(format!("position {p} masked twice")));
            }
            covered[p] = true;
        }
    }

    for target in plan {
        let span = target.word;
        for p in span.positions() {
            let original = seq.token_ids[p];
            mlm_labels[p + OFFSET] = Some(original);
            input_ids[p + OFFSET] = match target.action {
                MaskAction::MaskToken => Vocab::MASK_ID,
                MaskAction::RandomToken if vocab.len() > Vocab::NUM_SPECIAL => {
                    rng.gen_range(Vocab::NUM_SPECIAL as u32..vocab.len() as u32)
                }
                MaskAction::RandomToken => Vocab::MASK_ID,
                MaskAction::Keep => original,
            };
        }
        masked.push(MaskedWord {
            start: span.start + OFFSET,
            end: span.end + OFFSET,
            strategy: target.strategy,
            action: target.action,
        });
        match target.strategy {
            Strategy::Mrp => {
                if target.referents.is_empty() {
                    return Err(Error::PlanInvariant(format!(
                        "MRP target at {} has no referents",
                        span.start
                    )));
                }
                for r in &target.referents {
                    if r.end >= n || r.positions().any(|p| covered[p]) {
                        return Err(Error::PlanInvariant(format!(
                            "referent ({}, {}) overlaps a masked word",
                            r.start, r.end
                        )));
                    }
                }
                if mode == MaskingMode::Full {
                    mrp_targets.push(MrpTarget {
                        start: span.start + OFFSET,
                        end: span.end + OFFSET,
                        referents: target
                            .referents
                            .iter()
                            .map(|r| (r.start + OFFSET, r.end + OFFSET))
                            .collect(),
                    });
                }
            }
            Strategy::Mlm => {}
        }
    }

    Ok(TrainingInstance {
        input_ids,
        mlm_labels,
        mrp_targets,
        words: seq
            .words
            .iter()
            .map(|w| (w.start + OFFSET, w.end + OFFSET))
            .collect(),
        masked,
        eligible_groups,
    })
}

/// Convenience: sample a plan and materialize it with the same stream.
pub fn make_instance(
    seq: &TokenizedSequence,
    groups: &[MentionGroup],
    vocab: &Vocab,
    cfg: &MaskingConfig,
    rng: &mut Rng,
) -> Result<TrainingInstance> {
    let plan = sample_plan(seq, groups, cfg, rng);
    let eligible = groups.iter().filter(|g| g.is_eligible()).count();
    apply_plan(seq, &plan, vocab, cfg.mode, eligible, rng)
}

#[cfg(test)]
mod tests {
    use super::Strategy;
    use super::*;
    use crate::mentions::{detect_mention_groups, parse_tagged_line};
    use crate::rng::{stream, Purpose};
    use crate::tokenizer::{tokenize, SPECIAL_TOKENS};
    use proptest::prelude::*;
    use proptest::strategy::Strategy as _;

    fn vocab_of(words: &[&str]) -> Vocab {
        let mut entries: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        for w in words {
            if !entries.iter().any(|e| e == w) {
                entries.push(w.to_string());
            }
        }
        Vocab::from_entries(entries).unwrap()
    }

    const FIGURE: &str = "Claire/PROPN is/VERB a/OTHER lawyer/NOUN ./OTHER she/PRON filed/VERB a/OTHER \
                          defense/NOUN ./OTHER the/OTHER judge/NOUN thanked/VERB Claire/PROPN ./OTHER";

    fn figure() -> (TokenizedSequence, Vec<MentionGroup>, Vocab) {
        let tagged = parse_tagged_line(FIGURE).unwrap();
        let words: Vec<&str> = tagged.iter().map(|t| t.word.as_str()).collect();
        let vocab = vocab_of(&words);
        (
            tokenize(&words, &vocab),
            detect_mention_groups(&tagged),
            vocab,
        )
    }

    fn claire_plan(seq: &TokenizedSequence, action: MaskAction) -> Vec<MaskTarget> {
        vec![
            MaskTarget {
                word: seq.words[8],
                strategy: Strategy::Mlm,
                action: MaskAction::MaskToken,
                referents: vec![],
            },
            MaskTarget {
                word: seq.words[13],
                strategy: Strategy::Mrp,
                action,
                referents: vec![seq.words[0]],
            },
        ]
    }

    #[test]
    fn figure_one_instance() {
        let (seq, _, vocab) = figure();
        let mut rng = stream(1, Purpose::Masking, 0);
        let inst = apply_plan(
            &seq,
            &claire_plan(&seq, MaskAction::MaskToken),
            &vocab,
            MaskingMode::Full,
            1,
            &mut rng,
        )
        .unwrap();
        let claire = vocab.id("Claire").unwrap();
        assert_eq!(inst.input_ids[14], Vocab::MASK_ID);
        assert_eq!(inst.mlm_labels[14], Some(claire));
        assert_eq!(inst.mlm_labels[9], vocab.id("defense"));
        assert_eq!(
            inst.mrp_targets,
            vec![MrpTarget {
                start: 14,
                end: 14,
                referents: vec![(1, 1)]
            }]
        );
        assert_eq!(inst.labeled_positions().count(), 2);
        inst.validate().unwrap();

        let mrm = apply_plan(
            &seq,
            &claire_plan(&seq, MaskAction::MaskToken),
            &vocab,
            MaskingMode::Mrm,
            1,
            &mut rng,
        )
        .unwrap();
        assert!(mrm.mrp_targets.is_empty());
        assert_eq!(mrm.masked[1].strategy, Strategy::Mrp);
    }

    #[test]
    fn figure_one_sampled_plan() {
        let (seq, groups, _) = figure();
        let cfg = MaskingConfig::default();
        // budget round(0.15 * 15) = 2; search seeds for a plan with one MRP pick
        let mut found = false;
        for seed in 0..200 {
            let plan = sample_plan(&seq, &groups, &cfg, &mut stream(seed, Purpose::Masking, 0));
            assert_eq!(plan.len(), 2);
            if let Some(t) = plan.iter().find(|t| t.strategy == Strategy::Mrp) {
                assert_eq!(seq.raw_words[t.word.word_index], "Claire");
                let other = if t.word.word_index == 0 { 13 } else { 0 };
                assert_eq!(t.referents, vec![seq.words[other]]);
                found = true;
            }
        }
        assert!(found);
    }

    #[test]
    fn empty_plan_and_keep() {
        let vocab = vocab_of(&["un", "##happi", "##ness", "x"]);
        let seq = tokenize(&["x", "unhappiness"], &vocab);
        let mut rng = stream(3, Purpose::Masking, 0);
        let inst = apply_plan(&seq, &[], &vocab, MaskingMode::Full, 0, &mut rng).unwrap();
        assert_eq!(&inst.input_ids[1..5], &seq.token_ids[..]);
        assert!(inst.mlm_labels.iter().all(Option::is_none));

        let keep = [MaskTarget {
            word: seq.words[1],
            strategy: Strategy::Mlm,
            action: MaskAction::Keep,
            referents: vec![],
        }];
        let inst = apply_plan(&seq, &keep, &vocab, MaskingMode::Full, 0, &mut rng).unwrap();
        assert_eq!(&inst.input_ids[1..5], &seq.token_ids[..]);
        assert_eq!(inst.labeled_positions().count(), 3);
    }

    #[test]
    fn referent_overlapping_masked_word_is_rejected() {
        let (seq, _, vocab) = figure();
        let plan = vec![
            MaskTarget {
                word: seq.words[0],
                strategy: Strategy::Mlm,
                action: MaskAction::MaskToken,
                referents: vec![],
            },
            MaskTarget {
                word: seq.words[13],
                strategy: Strategy::Mrp,
                action: MaskAction::MaskToken,
                referents: vec![seq.words[0]],
            },
        ];
        let err = apply_plan(
            &seq,
            &plan,
            &vocab,
            MaskingMode::Full,
            1,
            &mut stream(0, Purpose::Masking, 0),
        );
        assert!(matches!(err, Err(Error::PlanInvariant(_))));
    }

    #[test]
    fn budget_of_twenty_tokens() {
        let words: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let vocab = vocab_of(&refs);
        let seq = tokenize(&refs, &vocab);
        for seed in 0..20 {
            let plan = sample_plan(
                &seq,
                &[],
                &MaskingConfig::default(),
                &mut stream(seed, Purpose::Masking, 0),
            );
            assert_eq!(plan.iter().map(|t| t.word.len()).sum::<usize>(), 3);
        }
    }

    #[test]
    fn random_random_tokens_are_not_special() {
        let (seq, groups, vocab) = figure();
        let cfg = MaskingConfig {
            mask_prob: 0.0,
            random_prob: 1.0,
            keep_prob: 0.0,
            ..Default::default()
        };
        for seed in 0..50 {
            let inst = make_instance(
                &seq,
                &groups,
                &vocab,
                &cfg,
                &mut stream(seed, Purpose::Masking, 0),
            )
            .unwrap();
            for (p, _) in inst.labeled_positions() {
                assert!(!vocab.is_special(inst.input_ids[p]));
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(MaskingConfig::default().validate().is_ok());
        let bad = MaskingConfig {
            keep_prob: 0.2,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = MaskingConfig {
            budget_fraction: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!("FULL".parse::<MaskingMode>().unwrap(), MaskingMode::Full);
        assert!("span".parse::<MaskingMode>().is_err());
    }

    fn arb_sequence() -> impl proptest::strategy::Strategy<Value = (Vec<String>, Vec<bool>)> {
        prop::collection::vec(
            (
                prop::sample::select(vec!["ann", "bo", "kalomi", "cat", "the", "ran", "a", "x"]),
                any::<bool>(),
            ),
            1..40,
        )
        .prop_map(|v| v.into_iter().map(|(w, noun)| (w.to_string(), noun)).unzip())
    }

    proptest! {
        #[test]
        fn plan_invariants(
            (words, nouns) in arb_sequence(),
            seed in any::<u64>(),
            mode in prop::sample::select(vec![MaskingMode::RandomSubword, MaskingMode::Wwm, MaskingMode::Mrm, MaskingMode::Full]),
        ) {
            use crate::mentions::{PosTag, TaggedWord};
            let vocab = vocab_of(&["ann", "bo", "ka", "##lo", "##mi", "cat", "the", "ran", "a", "x"]);
            let seq = tokenize(&words, &vocab);
            let tagged: Vec<TaggedWord> = words.iter().zip(&nouns)
                .map(|(w, &n)| TaggedWord::new(w.clone(), if n { PosTag::Noun } else { PosTag::Verb }))
                .collect();
            let groups = detect_mention_groups(&tagged);
            let cfg = MaskingConfig { mode, ..Default::default() };
            let plan = sample_plan(&seq, &groups, &cfg, &mut stream(seed, Purpose::Masking, 0));
            let again = sample_plan(&seq, &groups, &cfg, &mut stream(seed, Purpose::Masking, 0));
            prop_assert_eq!(&plan, &again);

            let budget = cfg.budget(seq.len());
            let used: usize = plan.iter().map(|t| t.word.len()).sum();
            prop_assert!(used <= budget);
            // maximal: no unmasked word would still fit
            let masked: Vec<usize> = plan.iter().map(|t| t.word.word_index).collect();
            if mode != MaskingMode::RandomSubword {
                let protected: Vec<usize> = plan.iter().flat_map(|t| t.referents.iter().map(|r| r.word_index)).collect();
                for w in &seq.words {
                    if !masked.contains(&w.word_index) && !protected.contains(&w.word_index) {
                        prop_assert!(used + w.len() > budget);
                    }
                }
            } else {
                prop_assert_eq!(used, budget.min(seq.len()));
            }
            if matches!(mode, MaskingMode::RandomSubword | MaskingMode::Wwm) {
                prop_assert!(plan.iter().all(|t| t.strategy == Strategy::Mlm));
            }

            let inst = apply_plan(&seq, &plan, &vocab, mode, 0, &mut stream(seed, Purpose::Masking, 1)).unwrap();
            inst.validate().unwrap();
            let original = inst.original_ids();
            for t in &inst.mrp_targets {
                for &(s, e) in &t.referents {
                    prop_assert_eq!(&inst.input_ids[s..=e], &original[s..=e]);
                }
            }
            prop_assert_eq!(inst.labeled_positions().count(), used);
        }
    }
}
