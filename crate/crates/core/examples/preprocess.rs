//! Runs the corpus pipeline on the bundled stories: pack, mask, shard,
//! then reads the shards back and reports masking statistics.

use corefkit::corpus::{parse_documents, preprocess, read_shards, MaskingStats, PreprocessConfig};
use corefkit::mentions::Tagger;
use corefkit::tokenizer::build_vocab;

fn main() -> corefkit::Result<()> {
    let text = include_str!("../data/stories.txt");
    let docs = parse_documents(text, Tagger::PreTagged)?;
    let vocab = build_vocab(docs.iter().flatten().map(|w| w.word.as_str()), 256)?;
    let out = std::env::temp_dir().join("corefkit-preprocess-example");
    let cfg = PreprocessConfig {
        shard_size: 200,
        seed: 7,
        ..Default::default()
    };
    let manifest = preprocess(&docs, &vocab, &cfg, &out)?;
    println!(
        "{} instances in {} shards under {}",
        manifest.total(),
        manifest.shards.len(),
        out.display()
    );
    println!("fingerprint {}", manifest.fingerprint);

    let instances = read_shards(manifest.path())?.collect::<corefkit::Result<Vec<_>>>()?;
    print!("{}", MaskingStats::from_instances(&instances).report());
    Ok(())
}
