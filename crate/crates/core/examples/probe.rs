//! Probes a briefly trained model: copy-head recovery of hidden names and
//! masked-LM disambiguation between candidate names.

use corefkit::corpus::{build_instances, PreprocessConfig};
use corefkit::model::{init_params, ModelConfig};
use corefkit::probe::{
    disambiguation_items, evaluate_disambiguation, evaluate_recovery, format_probe_line,
    recover_mention, recovery_items,
};
use corefkit::synthetic::{documents, generate_stories, StoryConfig};
use corefkit::tokenizer::build_vocab;
use corefkit::trainer::{train, TrainConfig};

fn main() -> corefkit::Result<()> {
    let stories = generate_stories(&StoryConfig::default(), 0, 5000);
    let vocab = build_vocab(stories.iter().flat_map(|s| s.surface()), 256)?;
    let data = build_instances(&documents(&stories), &vocab, &PreprocessConfig::default())?;
    let params = init_params(
        &ModelConfig {
            vocab_size: vocab.len(),
            ..Default::default()
        },
        0,
    )?;

    let probe = recovery_items(&generate_stories(&StoryConfig::default(), 1, 300), 0);
    println!("probe line: {}", format_probe_line(&probe[0]));
    println!(
        "untrained: {:?}",
        evaluate_recovery(&params, &vocab, &probe)?
    );

    let cfg = TrainConfig {
        steps: 400,
        peak_lr: 3e-3,
        ..Default::default()
    };
    let trained = train(&data, params, &cfg, None, |_| {})?.params;
    println!(
        "trained:   {:?}",
        evaluate_recovery(&trained, &vocab, &probe)?
    );
    println!(
        "ranking of first item: {:?} (gold {})",
        recover_mention(&trained, &vocab, &probe[0])?,
        probe[0].gold
    );
    println!(
        "disambiguation accuracy: {:.3}",
        evaluate_disambiguation(&trained, &vocab, &disambiguation_items(&probe))?
    );
    Ok(())
}
