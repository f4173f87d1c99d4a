//! From raw documents to sharded training instances.
//!
//! [`read_documents`] loads text, [`pack_sequences`] cuts documents into
//! model-sized sequences, [`preprocess`] masks them and writes shards, and
//! [`MaskingStats`] measures what the masker actually did.

mod packing;
mod shards;
mod stats;

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::masking::{make_instance, MaskingConfig, TrainingInstance};
use crate::mentions::{detect_mention_groups, parse_tagged_line, tag_words, TaggedWord, Tagger};
use crate::rng::{stream, Purpose};
use crate::tokenizer::Vocab;

pub use packing::{pack_document, pack_sequences, PackedSequence, PackingConfig};
pub use shards::{
    fingerprint, read_shard_file, read_shards, write_shards, InstanceStream, ShardManifest,
    SHARD_MAGIC, SHARD_VERSION,
};
pub use stats::MaskingStats;

/// A document is a flat list of tagged words.
pub type Document = Vec<TaggedWord>;

/// Parses documents from text: one sentence per line, documents separated
/// by blank lines. Pre-tagged input uses `word/TAG` tokens.
pub fn parse_documents(text: &str, tagger: Tagger) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut current: Document = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                docs.push(std::mem::take(&mut current));
            }
            continue;
        }
        let words = match tagger {
            Tagger::PreTagged => parse_tagged_line(line)
                .map_err(|e| Error::MalformedTags(format!("line {}: {e}", lineno + 1)))?,
            Tagger::Heuristic => {
                let raw: Vec<&str> = line.split_whitespace().collect();
                tag_words(&raw, Tagger::Heuristic)?
            }
        };
        current.extend(words);
    }
    if !current.is_empty() {
        docs.push(current);
    }
    Ok(docs)
}

pub fn read_documents(path: impl AsRef<Path>, tagger: Tagger) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_documents(&text, tagger)
}

#[derive(Clone, Debug)]
pub struct PreprocessConfig {
    pub masking: MaskingConfig,
    pub packing: PackingConfig,
    pub shard_size: usize,
    pub seed: u64,
    /// Worker threads; output bytes do not depend on it.
    pub workers: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            masking: MaskingConfig::default(),
            packing: PackingConfig::default(),
            shard_size: 10_000,
            seed: 0,
            workers: 1,
        }
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

/// Packs and masks every document. Sequence `i` is masked with stream
/// `(seed, masking, i)`, so the result is independent of `workers`.
pub fn build_instances(
    docs: &[Document],
    vocab: &Vocab,
    cfg: &PreprocessConfig,
) -> Result<Vec<TrainingInstance>> {
    cfg.masking.validate()?;
    cfg.packing.validate()?;
    pool(cfg.workers)?.install(|| {
        let packed: Vec<Vec<PackedSequence>> = docs
            .par_iter()
            .enumerate()
            .map(|(i, doc)| {
                let mut rng = stream(cfg.seed, Purpose::Packing, i as u64);
                pack_document(doc, vocab, &cfg.packing, &mut rng)
            })
            .collect();
        let packed: Vec<PackedSequence> = packed.into_iter().flatten().collect();
        packed
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let tagged: Vec<TaggedWord> = p
                    .sequence
                    .raw_words
                    .iter()
                    .zip(&p.tags)
                    .map(|(w, &t)| TaggedWord::new(w.clone(), t))
                    .collect();
                let groups = detect_mention_groups(&tagged);
                let mut rng = stream(cfg.seed, Purpose::Masking, i as u64);
                make_instance(&p.sequence, &groups, vocab, &cfg.masking, &mut rng)
            })
            .collect()
    })
}

/// Tag, pack, mask and shard. Writes `manifest.txt` and shard files into
/// `out_dir`.
pub fn preprocess(
    docs: &[Document],
    vocab: &Vocab,
    cfg: &PreprocessConfig,
    out_dir: impl AsRef<Path>,
) -> Result<ShardManifest> {
    let instances = build_instances(docs, vocab, cfg)?;
    write_shards(
        &instances,
        out_dir,
        cfg.shard_size,
        cfg.seed,
        &fingerprint(&cfg.masking, vocab),
    )
}
