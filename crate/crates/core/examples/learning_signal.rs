//! Trains the copy objective and a random-subword MLM baseline on templated
//! stories, then compares masked name recovery on held-out stories.
//!
//! `cargo run --release --example learning_signal -- [stories] [steps]`

use std::time::Instant;

use corefkit::corpus::{build_instances, PreprocessConfig};
use corefkit::masking::{MaskingConfig, MaskingMode};
use corefkit::model::{init_params, ModelConfig};
use corefkit::objectives::LossWeights;
use corefkit::probe::{evaluate_mlm_recovery, evaluate_recovery, recovery_items};
use corefkit::synthetic::{documents, generate_stories, StoryConfig};
use corefkit::tokenizer::build_vocab;
use corefkit::trainer::{evaluate, train, TrainConfig};

fn main() -> corefkit::Result<()> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("numeric argument"))
        .collect();
    let count = args.first().copied().unwrap_or(50_000);
    let steps = args.get(1).copied().unwrap_or(2000);
    let t0 = Instant::now();

    let env = |k: &str, d: f64| {
        std::env::var(k)
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(d)
    };
    let base = StoryConfig::default();
    let story = StoryConfig {
        filler_prob: env("FILLER", base.filler_prob),
        min_syllables: env("SYL_MIN", base.min_syllables as f64) as usize,
        max_syllables: env("SYL_MAX", base.max_syllables as f64) as usize,
        adjacent_references: env("ADJACENT", 1.0) > 0.0,
        ..base
    };
    let stories = generate_stories(&story, 1, count);
    let held_out = generate_stories(&story, 2, 1000);
    let vocab = build_vocab(stories.iter().flat_map(|s| s.surface()), 256)?;
    let probe = recovery_items(&held_out, 3);
    let model = ModelConfig {
        vocab_size: vocab.len(),
        hidden: env("D", 32.0) as usize,
        layers: env("LAYERS", 2.0) as usize,
        heads: env("HEADS", 2.0) as usize,
        ffn: env("FFN", 64.0) as usize,
        ..Default::default()
    };
    println!(
        "vocab {} | model {} params",
        vocab.len(),
        init_params(&model, 0)?.num_params()
    );

    let modes = if env("BASELINE", 1.0) > 0.0 {
        vec![MaskingMode::Full, MaskingMode::RandomSubword]
    } else {
        vec![MaskingMode::Full]
    };
    for mode in modes {
        let cfg = PreprocessConfig {
            masking: MaskingConfig {
                mode,
                ..Default::default()
            },
            seed: 4,
            ..Default::default()
        };
        let data = build_instances(&documents(&stories), &vocab, &cfg)?;
        let tokens: usize = data.iter().map(|d| d.seq_len()).sum();
        println!(
            "{} sequences, {:.1} tokens each",
            data.len(),
            tokens as f64 / data.len() as f64
        );
        let params = init_params(&model, 5 + env("SEED", 0.0) as u64)?;
        let before = evaluate_recovery(&params, &vocab, &probe)?;
        let tc = TrainConfig {
            steps,
            seed: 6 + env("SEED", 0.0) as u64,
            peak_lr: env("LR", 1e-3),
            batch_size: env("BATCH", 16.0) as usize,
            weights: LossWeights {
                mrp: env("W_MRP", 1.0),
                mlm: 1.0,
            },
            ..Default::default()
        };
        let out = train(&data, params, &tc, None, |m| {
            if m.step % 200 == 0 {
                println!(
                    "  {mode} step {:5} L={:.4} L_MRP={:.4} L_MLM={:.4}",
                    m.step, m.total, m.mrp, m.mlm
                );
            }
        })?;
        let after = evaluate_recovery(&out.params, &vocab, &probe)?;
        let mlm = evaluate_mlm_recovery(&out.params, &vocab, &probe)?;
        let (mrp_loss, mlm_loss) = evaluate(&data[..500], &out.params, tc.weights)?;
        println!(
            "{mode}: copy acc@1 {:.3} -> {:.3} (mrr {:.3}) | mlm argmax {:.3} | train L_MRP {:.3} L_MLM {:.3} | {:.0?}",
            before.accuracy_at_1, after.accuracy_at_1, after.mrr, mlm, mrp_loss, mlm_loss, t0.elapsed()
        );
    }
    Ok(())
}
