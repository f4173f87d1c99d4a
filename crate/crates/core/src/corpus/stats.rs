use std::fmt::Write as _;

use crate::masking::{MaskAction, Strategy, TrainingInstance};

/// Aggregate masking counts over a set of instances.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MaskingStats {
    pub sequences: usize,
    pub body_tokens: usize,
    pub masked_tokens: usize,
    pub masked_words: usize,
    /// Masked words by action: mask token, random token, keep.
    pub actions: [usize; 3],
    pub mrp_words: usize,
    /// Sequences with at least one MRP-eligible noun group.
    pub eligible_sequences: usize,
    pub masked_words_in_eligible: usize,
    pub mrp_words_in_eligible: usize,
    pub mrp_targets: usize,
}

impl MaskingStats {
    pub fn add(&mut self, inst: &TrainingInstance) {
        self.sequences += 1;
        self.body_tokens += inst.body_len();
        self.masked_tokens += inst.labeled_positions().count();
        self.masked_words += inst.masked.len();
        let mrp = inst
            .masked
            .iter()
            .filter(|m| m.strategy == Strategy::Mrp)
            .count();
        self.mrp_words += mrp;
        for m in &inst.masked {
            let slot = match m.action {
                MaskAction::MaskToken => 0,
                MaskAction::RandomToken => 1,
                MaskAction::Keep => 2,
            };
            self.actions[slot] += 1;
        }
        if inst.eligible_groups > 0 {
            self.eligible_sequences += 1;
            self.masked_words_in_eligible += inst.masked.len();
            self.mrp_words_in_eligible += mrp;
        }
        self.mrp_targets += inst.mrp_targets.len();
    }

    pub fn from_instances<'a>(instances: impl IntoIterator<Item = &'a TrainingInstance>) -> Self {
        let mut s = MaskingStats::default();
        for inst in instances {
            s.add(inst);
        }
        s
    }

    fn ratio(a: usize, b: usize) -> f64 {
        if b == 0 {
            0.0
        } else {
            a as f64 / b as f64
        }
    }

    pub fn masked_token_fraction(&self) -> f64 {
        Self::ratio(self.masked_tokens, self.body_tokens)
    }

    pub fn action_fractions(&self) -> [f64; 3] {
        self.actions.map(|a| Self::ratio(a, self.masked_words))
    }

    /// MRP share of masked words among sequences with an eligible group.
    pub fn mrp_share(&self) -> f64 {
        Self::ratio(self.mrp_words_in_eligible, self.masked_words_in_eligible)
    }

    /// `key=value` report, one metric per line.
    pub fn report(&self) -> String {
        let [mask, random, keep] = self.action_fractions();
        let mut s = String::new();
        let _ = writeln!(s, "sequences={}", self.sequences);
        let _ = writeln!(s, "body_tokens={}", self.body_tokens);
        let _ = writeln!(s, "masked_tokens={}", self.masked_tokens);
        let _ = writeln!(
            s,
            "masked_token_fraction={:.6}",
            self.masked_token_fraction()
        );
        let _ = writeln!(s, "masked_words={}", self.masked_words);
        let _ = writeln!(s, "action_mask_fraction={mask:.6}");
        let _ = writeln!(s, "action_random_fraction={random:.6}");
        let _ = writeln!(s, "action_keep_fraction={keep:.6}");
        let _ = writeln!(s, "eligible_sequences={}", self.eligible_sequences);
        let _ = writeln!(s, "mrp_word_share={:.6}", self.mrp_share());
        let _ = writeln!(s, "mrp_targets={}", self.mrp_targets);
        s
    }
}
