//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Command-line settings win
//! over the `COREFKIT_SEED` environment variable (seed only), which wins over
//! the file, which wins over defaults.

use std::fs;
use std::path::{Path, PathBuf};

use crate::corpus::{PackingConfig, PreprocessConfig};
use crate::error::{Error, Result};
use crate::masking::{MaskingConfig, MaskingMode};
use crate::mentions::Tagger;
use crate::model::ModelConfig;
use crate::objectives::{LossWeights, Objective};
use crate::probe::ProbeMode;
use crate::trainer::TrainConfig;

pub const SEED_ENV: &str = "COREFKIT_SEED";

/// Every recognised key, in the order `to_text` writes them.
pub const KEYS: &[&str] = &[
    "seed",
    "workers",
    "out",
    "corpus",
    "tagger",
    "vocab",
    "vocab_target",
    "manifest",
    "checkpoint",
    "probe",
    "probe_mode",
    "mode",
    "budget_fraction",
    "mlm_ratio",
    "mrp_ratio",
    "mask_prob",
    "random_prob",
    "keep_prob",
    "max_len",
    "shorten_prob",
    "min_len",
    "shard_size",
    "hidden",
    "layers",
    "heads",
    "ffn",
    "max_positions",
    "dropout",
    "batch_size",
    "steps",
    "lr",
    "warmup",
    "mrp_weight",
    "mlm_weight",
    "objective",
    "checkpoint_every",
    "clip_norm",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub corpus: Option<PathBuf>,
    pub tagger: Tagger,
    pub vocab: Option<PathBuf>,
    pub vocab_target: usize,
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub probe: Option<PathBuf>,
    pub probe_mode: ProbeMode,
    pub masking: MaskingConfig,
    pub packing: PackingConfig,
    pub shard_size: usize,
    /// `vocab_size` is filled from the vocabulary at run time.
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: 1,
            out: PathBuf::from("out"),
            corpus: None,
            tagger: Tagger::Heuristic,
            vocab: None,
            vocab_target: 512,
            manifest: None,
            checkpoint: None,
            probe: None,
            probe_mode: ProbeMode::Recovery,
            masking: MaskingConfig::default(),
            packing: PackingConfig::default(),
            shard_size: 10_000,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn unknown(key: &str) -> Error {
    Error::Config(format!(
        "unknown key {key:?}; valid keys: {}",
        KEYS.join(", ")
    ))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        // an empty value unsets an optional path
        let path = || (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "seed" => self.seed = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "corpus" => self.corpus = path(),
            "tagger" => {
                self.tagger = match v {
                    "pretagged" => Tagger::PreTagged,
                    "heuristic" => Tagger::Heuristic,
                    _ => {
                        return Err(Error::Config(format!(
                            "tagger must be pretagged or heuristic, got {v:?}"
                        )))
                    }
                }
            }
            "vocab" => self.vocab = path(),
            "vocab_target" => self.vocab_target = parse(key, v)?,
            "manifest" => self.manifest = path(),
            "checkpoint" => self.checkpoint = path(),
            "probe" => self.probe = path(),
            "probe_mode" => {
                self.probe_mode = match v {
                    "recovery" => ProbeMode::Recovery,
                    "disambiguation" => ProbeMode::Disambiguation,
                    _ => {
                        return Err(Error::Config(format!(
                            "probe_mode must be recovery or disambiguation, got {v:?}"
                        )))
                    }
                }
            }
            "mode" => self.masking.mode = v.parse::<MaskingMode>()?,
            "budget_fraction" => self.masking.budget_fraction = parse(key, v)?,
            "mlm_ratio" => self.masking.mlm_ratio = parse(key, v)?,
            "mrp_ratio" => self.masking.mrp_ratio = parse(key, v)?,
            "mask_prob" => self.masking.mask_prob = parse(key, v)?,
            "random_prob" => self.masking.random_prob = parse(key, v)?,
            "keep_prob" => self.masking.keep_prob = parse(key, v)?,
            "max_len" => self.packing.max_len = parse(key, v)?,
            "shorten_prob" => self.packing.shorten_prob = parse(key, v)?,
            "min_len" => self.packing.min_len = parse(key, v)?,
            "shard_size" => self.shard_size = parse(key, v)?,
            "hidden" => self.model.hidden = parse(key, v)?,
            "layers" => self.model.layers = parse(key, v)?,
            "heads" => self.model.heads = parse(key, v)?,
            "ffn" => self.model.ffn = parse(key, v)?,
            "max_positions" => self.model.max_positions = parse(key, v)?,
            "dropout" => self.model.dropout = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "steps" => self.train.steps = parse(key, v)?,
            "lr" => self.train.peak_lr = parse(key, v)?,
            "warmup" => self.train.warmup = parse(key, v)?,
            "mrp_weight" => self.train.weights.mrp = parse(key, v)?,
            "mlm_weight" => self.train.weights.mlm = parse(key, v)?,
            "objective" => {
                self.train.objective = match v {
                    "joint" => Objective::Joint,
                    "mlm_only" => Objective::MlmOnly,
                    _ => {
                        return Err(Error::Config(format!(
                            "objective must be joint or mlm_only, got {v:?}"
                        )))
                    }
                }
            }
            "checkpoint_every" => self.train.checkpoint_every = parse(key, v)?,
            "clip_norm" => self.train.clip_norm = parse(key, v)?,
            _ => return Err(unknown(key)),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String> {
        let p = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        Ok(match key {
            "seed" => self.seed.to_string(),
            "workers" => self.workers.to_string(),
            "out" => self.out.display().to_string(),
            "corpus" => p(&self.corpus),
            "tagger" => match self.tagger {
                Tagger::PreTagged => "pretagged".into(),
                Tagger::Heuristic => "heuristic".into(),
            },
            "vocab" => p(&self.vocab),
            "vocab_target" => self.vocab_target.to_string(),
            "manifest" => p(&self.manifest),
            "checkpoint" => p(&self.checkpoint),
            "probe" => p(&self.probe),
            "probe_mode" => match self.probe_mode {
                ProbeMode::Recovery => "recovery".into(),
                ProbeMode::Disambiguation => "disambiguation".into(),
            },
            "mode" => self.masking.mode.to_string(),
            "budget_fraction" => self.masking.budget_fraction.to_string(),
            "mlm_ratio" => self.masking.mlm_ratio.to_string(),
            "mrp_ratio" => self.masking.mrp_ratio.to_string(),
            "mask_prob" => self.masking.mask_prob.to_string(),
            "random_prob" => self.masking.random_prob.to_string(),
            "keep_prob" => self.masking.keep_prob.to_string(),
            "max_len" => self.packing.max_len.to_string(),
            "shorten_prob" => self.packing.shorten_prob.to_string(),
            "min_len" => self.packing.min_len.to_string(),
            "shard_size" => self.shard_size.to_string(),
            "hidden" => self.model.hidden.to_string(),
            "layers" => self.model.layers.to_string(),
            "heads" => self.model.heads.to_string(),
            "ffn" => self.model.ffn.to_string(),
            "max_positions" => self.model.max_positions.to_string(),
            "dropout" => self.model.dropout.to_string(),
            "batch_size" => self.train.batch_size.to_string(),
            "steps" => self.train.steps.to_string(),
            "lr" => self.train.peak_lr.to_string(),
            "warmup" => self.train.warmup.to_string(),
            "mrp_weight" => self.train.weights.mrp.to_string(),
            "mlm_weight" => self.train.weights.mlm.to_string(),
            "objective" => match self.train.objective {
                Objective::Joint => "joint".into(),
                Objective::MlmOnly => "mlm_only".into(),
            },
            "checkpoint_every" => self.train.checkpoint_every.to_string(),
            "clip_norm" => self.train.clip_norm.to_string(),
            _ => return Err(unknown(key)),
        })
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {raw:?}", i + 1))
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Defaults, then `file`, then the seed variable, then `overrides` in
    /// order.
    pub fn resolve(
        file: Option<&Path>,
        env_seed: Option<&str>,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = env_seed {
            cfg.seed = s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be a u64, got {s:?}")))?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.masking.validate()?;
        self.packing.validate()?;
        self.train.validate()?;
        if self.workers == 0 || self.shard_size == 0 {
            return Err(Error::Config(
                "workers and shard_size must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    pub fn preprocess_config(&self) -> PreprocessConfig {
        PreprocessConfig {
            masking: self.masking.clone(),
            packing: self.packing.clone(),
            shard_size: self.shard_size,
            seed: self.seed,
            workers: self.workers,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            workers: self.workers,
            ..self.train.clone()
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            ..self.model.clone()
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        self.train.weights
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip_and_comments() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\nseed = 42  # trailing\nmode=wwm\n\nsteps = 10\n")
            .unwrap();
        assert_eq!(
            (cfg.seed, cfg.masking.mode, cfg.train.steps),
            (42, MaskingMode::Wwm, 10)
        );
        let mut again = RunConfig::default();
        again.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err = RunConfig::default()
            .set("sed", "1")
            .unwrap_err()
            .to_string();
        assert!(err.contains("unknown key") && err.contains("seed, workers"));
        assert!(RunConfig::default().set("steps", "many").is_err());
    }

    #[test]
    fn precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "seed = 1\nsteps = 5\n").unwrap();
        let file_only = RunConfig::resolve(Some(&path), None, &[]).unwrap();
        assert_eq!((file_only.seed, file_only.train.steps), (1, 5));
        let env = RunConfig::resolve(Some(&path), Some("2"), &[]).unwrap();
        assert_eq!(env.seed, 2);
        let flag =
            RunConfig::resolve(Some(&path), Some("2"), &[("seed".into(), "3".into())]).unwrap();
        assert_eq!((flag.seed, flag.train.steps), (3, 5));
        assert!(RunConfig::resolve(Some(&path), Some("x"), &[]).is_err());
    }
}
