//! Mini-batch Adam training with warmup and linear decay.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::masking::TrainingInstance;
use crate::model::ModelParams;
use crate::objectives::{loss_and_gradients, total_loss, LossWeights, Objective};
use crate::rng::{stream, Purpose};

pub const METRICS_HEADER: &str = "step,lr,L,L_MRP,L_MLM";
pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub peak_lr: f64,
    /// Fraction of `steps` spent warming up.
    pub warmup: f64,
    pub weights: LossWeights,
    pub objective: Objective,
    pub seed: u64,
    /// Write a checkpoint every this many steps; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Global gradient norm cap; 0 disables clipping.
    pub clip_norm: f64,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            steps: 2000,
            peak_lr: 1e-3,
            warmup: 0.2,
            weights: LossWeights::default(),
            objective: Objective::Joint,
            seed: 0,
            checkpoint_every: 0,
            clip_norm: 1.0,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.steps == 0 || self.workers == 0 {
            return Err(Error::Config(
                "batch_size, steps and workers must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.warmup) {
            return Err(Error::Config(format!(
                "warmup must lie in [0, 1], got {}",
                self.warmup
            )));
        }
        if !(self.peak_lr >= 0.0 && self.clip_norm >= 0.0) {
            return Err(Error::Config(
                "peak_lr and clip_norm must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn warmup_steps(&self) -> usize {
        (self.warmup * self.steps as f64).round() as usize
    }
}

/// Linear warmup from 0 to the peak, then linear decay to 0 at the last
/// step. Steps past the end give 0.
pub fn lr_at(step: usize, cfg: &TrainConfig) -> f64 {
    let (total, warm) = (cfg.steps, cfg.warmup_steps());
    if step >= total {
        return 0.0;
    }
    if step < warm {
        return cfg.peak_lr * step as f64 / warm as f64;
    }
    cfg.peak_lr * (1.0 - (step - warm) as f64 / (total - warm) as f64)
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    m: ModelParams,
    v: ModelParams,
    t: i32,
}

impl Adam {
    pub fn new(params: &ModelParams) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for ((((_, _, p), (_, _, g)), (_, _, m)), (_, _, v)) in tensors {
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

pub fn global_norm(grads: &ModelParams) -> f64 {
    grads
        .tensors()
        .iter()
        .flat_map(|t| t.2.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// One row of the metrics log. `total == mrp + mlm` holds exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub lr: f64,
    pub total: f64,
    pub mrp: f64,
    pub mlm: f64,
}

impl StepMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e}",
            self.step, self.lr, self.total, self.mrp, self.mlm
        )
    }
}

pub fn parse_metrics(text: &str) -> Result<Vec<StepMetrics>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Corrupt("metrics log lacks its header".into()));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Corrupt(format!("bad metrics row: {line}"));
            if f.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(StepMetrics {
                step: f[0].parse().map_err(|_| bad())?,
                lr: num(f[1])?,
                total: num(f[2])?,
                mrp: num(f[3])?,
                mlm: num(f[4])?,
            })
        })
        .collect()
}

/// Parameter owner and optimizer state.
pub struct Trainer {
    pub params: ModelParams,
    pub cfg: TrainConfig,
    adam: Adam,
    pool: rayon::ThreadPool,
    step: usize,
}

impl Trainer {
    pub fn new(params: ModelParams, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        Ok(Trainer {
            adam: Adam::new(&params),
            params,
            cfg,
            pool,
            step: 0,
        })
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// Averaged loss and gradient of a batch. Per-example gradients are
    /// computed in parallel and summed in batch order.
    pub fn batch_gradient(
        &self,
        batch: &[&TrainingInstance],
    ) -> Result<(ModelParams, StepMetrics)> {
        let (params, cfg) = (&self.params, &self.cfg);
        let base = (self.step * cfg.batch_size) as u64;
        let per_example: Vec<Result<(ModelParams, f64, f64)>> = self.pool.install(|| {
            batch
                .par_iter()
                .enumerate()
                .map(|(b, inst)| {
                    let mut g = params.zeros_like();
                    let mut rng = stream(cfg.seed, Purpose::Dropout, base + b as u64);
                    let l = loss_and_gradients(
                        inst,
                        params,
                        cfg.weights,
                        cfg.objective,
                        Some(&mut rng),
                        &mut g,
                    )?;
                    Ok((g, l.mrp, l.mlm))
                })
                .collect()
        });
        let mut grads = params.zeros_like();
        let (mut mrp, mut mlm) = (0.0, 0.0);
        for r in per_example {
            let (g, a, b) = r?;
            grads.add_assign(&g);
            mrp += a;
            mlm += b;
        }
        let scale = 1.0 / batch.len() as f64;
        grads.scale(scale);
        let (mrp, mlm) = (mrp * scale, mlm * scale);
        Ok((
            grads,
            StepMetrics {
                step: self.step + 1,
                lr: 0.0,
                total: mrp + mlm,
                mrp,
                mlm,
            },
        ))
    }

    /// One optimizer step on `batch`.
    pub fn step(&mut self, batch: &[&TrainingInstance]) -> Result<StepMetrics> {
        if batch.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let (mut grads, mut m) = self.batch_gradient(batch)?;
        if !m.total.is_finite() || !grads.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: m.step,
                dump: describe_batch(batch, &m),
            });
        }
        let norm = global_norm(&grads);
        if self.cfg.clip_norm > 0.0 && norm > self.cfg.clip_norm {
            grads.scale(self.cfg.clip_norm / norm);
        }
        m.lr = lr_at(self.step + 1, &self.cfg);
        self.adam.step(&mut self.params, &grads, m.lr);
        self.step += 1;
        Ok(m)
    }
}

fn describe_batch(batch: &[&TrainingInstance], m: &StepMetrics) -> String {
    let mut s = format!(
        "step {} L={} L_MRP={} L_MLM={}\n",
        m.step, m.total, m.mrp, m.mlm
    );
    for (i, inst) in batch.iter().enumerate() {
        let _ = writeln!(s, "instance {i}: {inst:?}");
    }
    s
}

/// Example order: consecutive epochs, each a fresh permutation drawn from
/// the shuffle stream of its epoch index.
pub fn batch_indices(n: usize, cfg: &TrainConfig) -> Vec<Vec<usize>> {
    let mut order = Vec::with_capacity(cfg.steps * cfg.batch_size);
    let mut epoch = 0;
    while order.len() < cfg.steps * cfg.batch_size {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut stream(cfg.seed, Purpose::Shuffle, epoch));
        order.extend(perm);
        epoch += 1;
    }
    order.truncate(cfg.steps * cfg.batch_size);
    order
        .chunks(cfg.batch_size)
        .map(<[usize]>::to_vec)
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub metrics: Vec<StepMetrics>,
    /// Final checkpoint path when an output directory was given.
    pub checkpoint: Option<PathBuf>,
}

/// Runs `cfg.steps` steps over `dataset`. With `out_dir`, writes
/// `metrics.csv` as it goes, periodic `checkpoint-NNNNNN.cpkm` files and the
/// final `model.cpkm`. A non-finite loss writes `nonfinite-batch.txt` and
/// aborts.
pub fn train(
    dataset: &[TrainingInstance],
    params: ModelParams,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    mut on_step: impl FnMut(&StepMetrics),
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut trainer = Trainer::new(params, cfg.clone())?;
    let mut log = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("metrics.csv");
            let mut f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            writeln!(f, "{METRICS_HEADER}").map_err(|e| Error::io(&path, e))?;
            Some((f, path))
        }
        None => None,
    };
    let mut metrics = Vec::with_capacity(cfg.steps);
    for idx in batch_indices(dataset.len(), cfg) {
        let batch: Vec<&TrainingInstance> = idx.iter().map(|&i| &dataset[i]).collect();
        let m = match trainer.step(&batch) {
            Err(Error::NonFiniteLoss { step, dump }) => {
                let dump = match out_dir {
                    Some(dir) => {
                        let path = dir.join("nonfinite-batch.txt");
                        fs::write(&path, &dump).map_err(|e| Error::io(&path, e))?;
                        path.display().to_string()
                    }
                    None => dump,
                };
                return Err(Error::NonFiniteLoss { step, dump });
            }
            other => other?,
        };
        if let Some((f, path)) = log.as_mut() {
            writeln!(f, "{}", m.csv_row()).map_err(|e| Error::io(&*path, e))?;
        }
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && m.step % cfg.checkpoint_every == 0 {
                trainer
                    .params
                    .save(dir.join(format!("checkpoint-{:06}.cpkm", m.step)))?;
            }
        }
        on_step(&m);
        metrics.push(m);
    }
    let checkpoint = match out_dir {
        Some(dir) => {
            let path = dir.join("model.cpkm");
            trainer.params.save(&path)?;
            Some(path)
        }
        None => None,
    };
    Ok(TrainOutcome {
        params: trainer.params,
        metrics,
        checkpoint,
    })
}

/// Mean weighted losses `(L_MRP, L_MLM)` over `dataset` without dropout.
pub fn evaluate(
    dataset: &[TrainingInstance],
    params: &ModelParams,
    weights: LossWeights,
) -> Result<(f64, f64)> {
    let (mut mrp, mut mlm) = (0.0, 0.0);
    for inst in dataset {
        let l = total_loss(inst, params, weights)?;
        mrp += l.mrp;
        mlm += l.mlm;
    }
    let n = dataset.len().max(1) as f64;
    Ok((mrp / n, mlm / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::MrpTarget;
    use crate::model::{init_params, ModelConfig};

    fn tiny() -> ModelConfig {
        ModelConfig {
            vocab_size: 16,
            hidden: 8,
            layers: 1,
            heads: 2,
            ffn: 8,
            max_positions: 12,
            dropout: 0.0,
        }
    }

    fn instance(salt: u32) -> TrainingInstance {
        // [CLS] a b MASK c a [SEP] with the masked word referring to position 1
        let ids = vec![3, 5 + salt % 3, 7, 2, 9, 5 + salt % 3, 4];
        let mut labels = vec![None; 7];
        labels[3] = Some(5 + salt % 3);
        TrainingInstance {
            input_ids: ids,
            mlm_labels: labels,
            mrp_targets: vec![MrpTarget {
                start: 3,
                end: 3,
                referents: vec![(1, 1), (5, 5)],
            }],
            words: vec![(1, 1), (2, 2), (3, 3), (4, 4), (5, 5)],
            masked: vec![],
            eligible_groups: 1,
        }
    }

    #[test]
    fn lr_schedule() {
        let cfg = TrainConfig {
            steps: 1000,
            warmup: 0.2,
            peak_lr: 5e-5,
            ..Default::default()
        };
        assert_eq!(lr_at(0, &cfg), 0.0);
        assert_eq!(lr_at(200, &cfg), 5e-5);
        assert!((lr_at(600, &cfg) - 2.5e-5).abs() < 1e-20);
        assert_eq!(lr_at(1000, &cfg), 0.0);
        assert_eq!(lr_at(5000, &cfg), 0.0);
        let no_warm = TrainConfig { warmup: 0.0, ..cfg };
        assert_eq!(lr_at(0, &no_warm), 5e-5);
    }

    #[test]
    fn zero_lr_and_zero_gradient_leave_params() {
        let p = init_params(&tiny(), 0).unwrap();
        let data: Vec<TrainingInstance> = (0..4).map(instance).collect();
        let cfg = TrainConfig {
            steps: 5,
            batch_size: 2,
            peak_lr: 0.0,
            ..Default::default()
        };
        let out = train(&data, p.clone(), &cfg, None, |_| {}).unwrap();
        assert_eq!(out.params, p);

        let mut q = p.clone();
        let mut adam = Adam::new(&q);
        for _ in 0..3 {
            adam.step(&mut q, &p.zeros_like(), 1e-2);
        }
        assert_eq!(q, p);
    }

    #[test]
    fn loss_drops_and_rows_add_up() {
        let p = init_params(&tiny(), 1).unwrap();
        let data: Vec<TrainingInstance> = (0..6).map(instance).collect();
        let cfg = TrainConfig {
            steps: 60,
            batch_size: 3,
            peak_lr: 1e-2,
            ..Default::default()
        };
        let before = evaluate(&data, &p, cfg.weights).unwrap();
        let out = train(&data, p, &cfg, None, |_| {}).unwrap();
        let after = evaluate(&data, &out.params, cfg.weights).unwrap();
        assert!(
            after.0 < before.0 && after.1 < before.1,
            "{before:?} -> {after:?}"
        );
        assert!(out.metrics.iter().all(|m| m.total == m.mrp + m.mlm));
    }

    #[test]
    fn metrics_round_trip_exactly() {
        let m = StepMetrics {
            step: 3,
            lr: 1.0 / 3.0,
            total: 0.1 + 0.2,
            mrp: 0.1,
            mlm: 0.2,
        };
        let text = format!("{METRICS_HEADER}\n{}\n", m.csv_row());
        assert_eq!(parse_metrics(&text).unwrap(), vec![m]);
    }

    #[test]
    fn batches_cover_epochs() {
        let cfg = TrainConfig {
            steps: 5,
            batch_size: 4,
            ..Default::default()
        };
        let b = batch_indices(10, &cfg);
        assert_eq!(b.len(), 5);
        let mut first: Vec<usize> = b.concat()[..10].to_vec();
        first.sort_unstable();
        assert_eq!(first, (0..10).collect::<Vec<_>>());
    }
}
