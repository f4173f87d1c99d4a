//! Masks one sequence under each masking mode and prints the result.

use corefkit::masking::{make_instance, MaskingConfig, MaskingMode};
use corefkit::mentions::{detect_mention_groups, parse_tagged_line};
use corefkit::rng::{stream, Purpose};
use corefkit::tokenizer::{build_vocab, tokenize};

fn main() -> corefkit::Result<()> {
    let line = "Claire/PROPN filed/VERB a/OTHER defense/NOUN and/OTHER the/OTHER court/NOUN \
                accepted/VERB the/OTHER defense/NOUN that/OTHER Claire/PROPN wrote/VERB ./OTHER";
    let tagged = parse_tagged_line(line)?;
    let words: Vec<&str> = tagged.iter().map(|w| w.word.as_str()).collect();
    let vocab = build_vocab(words.iter().copied(), 80)?;
    let seq = tokenize(&words, &vocab);
    let groups = detect_mention_groups(&tagged);

    for mode in [
        MaskingMode::RandomSubword,
        MaskingMode::Wwm,
        MaskingMode::Mrm,
        MaskingMode::Full,
    ] {
        // larger budget and MRP share than the defaults, to show both on one sentence
        let cfg = MaskingConfig {
            mode,
            budget_fraction: 0.4,
            mlm_ratio: 1,
            mrp_ratio: 1,
            ..Default::default()
        };
        let inst = make_instance(
            &seq,
            &groups,
            &vocab,
            &cfg,
            &mut stream(3, Purpose::Masking, 2),
        )?;
        let shown: Vec<&str> = inst
            .input_ids
            .iter()
            .map(|&id| vocab.token(id).unwrap())
            .collect();
        println!("{:>14}: {}", mode.to_string(), shown.join(" "));
        for t in &inst.mrp_targets {
            println!(
                "{:>14}  copy target ({}, {}) from {:?}",
                "", t.start, t.end, t.referents
            );
        }
    }
    Ok(())
}
