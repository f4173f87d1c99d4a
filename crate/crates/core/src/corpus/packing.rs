use rand::Rng as _;

use crate::error::{Error, Result};
use crate::mentions::{PosTag, TaggedWord};
use crate::rng::{stream, Purpose, Rng};
use crate::tokenizer::{tokenize_word, TokenizedSequence, Vocab, WordSpan};

#[derive(Clone, Debug, PartialEq)]
pub struct PackingConfig {
    /// Full instance length including `[CLS]` and `[SEP]`.
    pub max_len: usize,
    /// Probability that a sequence gets a shorter random target length.
    pub shorten_prob: f64,
    /// Lower end of the shortened length range.
    pub min_len: usize,
}

impl Default for PackingConfig {
    fn default() -> Self {
        PackingConfig {
            max_len: 512,
            shorten_prob: 0.1,
            min_len: 16,
        }
    }
}

impl PackingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_len < 3 || self.max_len > u16::MAX as usize {
            return Err(Error::Config(format!(
                "max_len must lie in [3, {}], got {}",
                u16::MAX,
                self.max_len
            )));
        }
        if self.min_len < 3 || self.min_len > self.max_len {
            return Err(Error::Config(format!(
                "min_len must lie in [3, max_len], got {}",
                self.min_len
            )));
        }
        if !(0.0..=1.0).contains(&self.shorten_prob) {
            return Err(Error::Config(format!(
                "shorten_prob must lie in [0, 1], got {}",
                self.shorten_prob
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PackedSequence {
    pub sequence: TokenizedSequence,
    pub tags: Vec<PosTag>,
    /// Whether this sequence drew a shortened target length.
    pub shortened: bool,
}

struct Builder {
    seq: TokenizedSequence,
    tags: Vec<PosTag>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            seq: TokenizedSequence::default(),
            tags: Vec::new(),
        }
    }

    fn push(&mut self, word: &TaggedWord, pieces: &[u32]) {
        let start = self.seq.token_ids.len();
        self.seq.token_ids.extend_from_slice(pieces);
        let word_index = self.seq.words.len();
        self.seq.words.push(WordSpan {
            word_index,
            start,
            end: self.seq.token_ids.len() - 1,
        });
        self.seq.raw_words.push(word.word.clone());
        self.tags.push(word.tag);
    }
}

/// Greedily packs one document into sequences of at most `max_len - 2`
/// body tokens. Each sequence first draws its target length: with
/// probability `shorten_prob` a uniform length in `[min_len, max_len]`.
/// A single word longer than the target is cut to fit.
pub fn pack_document(
    doc: &[TaggedWord],
    vocab: &Vocab,
    cfg: &PackingConfig,
    rng: &mut Rng,
) -> Vec<PackedSequence> {
    let pieces: Vec<Vec<u32>> = doc.iter().map(|w| tokenize_word(&w.word, vocab)).collect();
    let mut out = Vec::new();
    let mut next = 0;
    while next < doc.len() {
        let shortened = rng.gen_bool(cfg.shorten_prob);
        let target = if shortened {
            rng.gen_range(cfg.min_len..=cfg.max_len)
        } else {
            cfg.max_len
        };
        let cap = target - 2;
        let mut b = Builder::new();
        while next < doc.len() {
            let len = pieces[next].len();
            if b.seq.len() + len <= cap {
                b.push(&doc[next], &pieces[next]);
                next += 1;
            } else if b.seq.is_empty() {
                b.push(&doc[next], &pieces[next][..cap]);
                next += 1;
                break;
            } else {
                break;
            }
        }
        out.push(PackedSequence {
            sequence: b.seq,
            tags: b.tags,
            shortened,
        });
    }
    out
}

/// Packs documents in order; document `i` uses packing stream `(seed, i)`.
/// Sequences never span two documents.
pub fn pack_sequences(
    docs: &[Vec<TaggedWord>],
    vocab: &Vocab,
    cfg: &PackingConfig,
    seed: u64,
) -> Vec<PackedSequence> {
    docs.iter()
        .enumerate()
        .flat_map(|(i, doc)| {
            pack_document(
                doc,
                vocab,
                cfg,
                &mut stream(seed, Purpose::Packing, i as u64),
            )
        })
        .collect()
}
