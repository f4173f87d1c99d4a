//! Trains a tiny encoder on the bundled stories with the joint objective
//! and writes metrics and a checkpoint.

use corefkit::corpus::{build_instances, parse_documents, PreprocessConfig};
use corefkit::mentions::Tagger;
use corefkit::model::{init_params, ModelConfig, ModelParams};
use corefkit::tokenizer::build_vocab;
use corefkit::trainer::{evaluate, train, TrainConfig};

fn main() -> corefkit::Result<()> {
    let docs = parse_documents(include_str!("../data/stories.txt"), Tagger::PreTagged)?;
    let vocab = build_vocab(docs.iter().flatten().map(|w| w.word.as_str()), 256)?;
    let data = build_instances(&docs, &vocab, &PreprocessConfig::default())?;
    let params = init_params(
        &ModelConfig {
            vocab_size: vocab.len(),
            ..Default::default()
        },
        0,
    )?;
    let cfg = TrainConfig {
        steps: 300,
        peak_lr: 3e-3,
        ..Default::default()
    };

    let before = evaluate(&data, &params, cfg.weights)?;
    let out = std::env::temp_dir().join("corefkit-train-example");
    let result = train(&data, params, &cfg, Some(&out), |m| {
        if m.step % 50 == 0 {
            println!(
                "step {:4} lr {:.2e} L {:.3} = {:.3} + {:.3}",
                m.step, m.lr, m.total, m.mrp, m.mlm
            );
        }
    })?;
    let after = evaluate(&data, &result.params, cfg.weights)?;
    println!(
        "L_MRP {:.3} -> {:.3}, L_MLM {:.3} -> {:.3}",
        before.0, after.0, before.1, after.1
    );

    let path = result.checkpoint.expect("output dir given");
    assert_eq!(ModelParams::load(&path)?, result.params);
    println!(
        "checkpoint {} and metrics.csv in {}",
        path.display(),
        out.display()
    );
    Ok(())
}
