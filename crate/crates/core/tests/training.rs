use corefkit::corpus::{build_instances, PreprocessConfig};
use corefkit::model::{init_params, ModelConfig};
use corefkit::synthetic::{documents, generate_stories, StoryConfig};
use corefkit::tokenizer::build_vocab;
use corefkit::trainer::{evaluate, train, TrainConfig};

#[test]
fn copy_loss_falls_on_templated_stories() {
    let stories = generate_stories(&StoryConfig::default(), 0, 2000);
    let vocab = build_vocab(stories.iter().flat_map(|s| s.surface()), 256).unwrap();
    let data = build_instances(&documents(&stories), &vocab, &PreprocessConfig::default()).unwrap();
    let (train_set, held) = data.split_at(data.len() - 200);
    let model = ModelConfig {
        vocab_size: vocab.len(),
        hidden: 16,
        ffn: 32,
        ..Default::default()
    };
    let params = init_params(&model, 0).unwrap();
    let cfg = TrainConfig {
        steps: 200,
        peak_lr: 3e-3,
        ..Default::default()
    };
    let before = evaluate(held, &params, cfg.weights).unwrap();
    let out = train(train_set, params, &cfg, None, |_| {}).unwrap();
    let after = evaluate(held, &out.params, cfg.weights).unwrap();
    assert!(after.0 < before.0, "L_MRP {} -> {}", before.0, after.0);
    assert!(after.1 < before.1, "L_MLM {} -> {}", before.1, after.1);
}
