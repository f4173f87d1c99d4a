//! Builds a subword vocabulary and shows word-aligned tokenization.

use corefkit::tokenizer::{build_vocab, detokenize_word, tokenize};

fn main() -> corefkit::Result<()> {
    let corpus =
        "unhappiness is unusual . happiness of the cat is usual . the unhappy cat is happy";
    let vocab = build_vocab(corpus.split_whitespace(), 60)?;
    println!(
        "{} entries, fingerprint {}",
        vocab.len(),
        &vocab.fingerprint()[..16]
    );

    let words = ["the", "unhappiness", "of", "the", "unhappycat", "Claire"];
    let seq = tokenize(&words, &vocab);
    for span in &seq.words {
        let pieces: Vec<&str> = span
            .positions()
            .map(|p| vocab.token(seq.token_ids[p]).unwrap())
            .collect();
        println!(
            "{:>12} -> {:<28} span ({}, {}) -> {:?}",
            seq.raw_words[span.word_index],
            pieces.join(" "),
            span.start,
            span.end,
            detokenize_word(*span, &seq, &vocab)?
        );
    }
    Ok(())
}
