//! Subword vocabulary and tokenization with word alignment.
//!
//! Non-initial subwords carry the `##` continuation marker, so every subword
//! knows whether it opens a word. Tokenization is greedy longest-match-first
//! per word and records the subword span of every word, which is what whole
//! word masking and the start/end copy factorization rely on.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CONTINUATION: &str = "##";

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const MASK: &str = "[MASK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

/// Special tokens in the fixed order they occupy at the top of a vocabulary.
pub const SPECIAL_TOKENS: [&str; 5] = [PAD, UNK, MASK, CLS, SEP];

/// Dense subword inventory. Ids 0..5 are the special tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    entries: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub const PAD_ID: u32 = 0;
    pub const UNK_ID: u32 = 1;
    pub const MASK_ID: u32 = 2;
    pub const CLS_ID: u32 = 3;
    pub const SEP_ID: u32 = 4;
    pub const NUM_SPECIAL: usize = SPECIAL_TOKENS.len();

    /// Builds a vocabulary from an ordered list of entries. The first five
    /// entries must be the special tokens in order.
    pub fn from_entries(entries: Vec<String>) -> Result<Self> {
        if entries.len() < Self::NUM_SPECIAL {
            return Err(Error::InvalidVocab(format!(
                "{} entries, at least {} required",
                entries.len(),
                Self::NUM_SPECIAL
            )));
        }
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            if entries[i] != *special {
                return Err(Error::InvalidVocab(format!(
                    "line {} must be {special}, found {:?}",
                    i + 1,
                    entries[i]
                )));
            }
        }
        let mut index = HashMap::with_capacity(entries.len());
        for (id, entry) in entries.iter().enumerate() {
            if entry.is_empty() || entry.chars().any(char::is_whitespace) {
                return Err(Error::InvalidVocab(format!(
                    "entry {id} is empty or contains whitespace"
                )));
            }
            if index.insert(entry.clone(), id as u32).is_some() {
                return Err(Error::InvalidVocab(format!("duplicate entry {entry:?}")));
            }
        }
        Ok(Vocab { entries, index })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn is_special(&self, id: u32) -> bool {
        (id as usize) < Self::NUM_SPECIAL
    }

    /// Hex SHA-256 over the entries, one per line.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for entry in &self.entries {
            hasher.update(entry.as_bytes());
            hasher.update(b"\n");
        }
        hex(&hasher.finalize())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_entries(text.lines().map(str::to_owned).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for entry in &self.entries {
            out.extend_from_slice(entry.as_bytes());
            out.push(b'\n');
        }
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&out).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn strip_continuation(token: &str) -> &str {
    token.strip_prefix(CONTINUATION).unwrap_or(token)
}

/// Learns a subword vocabulary of at most `target_size` entries.
///
/// The base alphabet holds every corpus character in both word-initial and
/// continuation form, so any word over the corpus alphabet can be segmented.
/// Adjacent symbol pairs are then merged by corpus frequency; ties go to the
/// pair seen first in corpus order.
pub fn build_vocab<I, S>(corpus: I, target_size: usize) -> Result<Vocab>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    // word -> slot in first-occurrence order
    let mut slots: HashMap<String, usize> = HashMap::new();
    let mut words: Vec<(Vec<String>, u64)> = Vec::new();
    let mut chars = BTreeSet::new();
    for line in corpus {
        for word in line.as_ref().split_whitespace() {
            if let Some(&slot) = slots.get(word) {
                words[slot].1 += 1;
                continue;
            }
            let symbols: Vec<String> = word
                .chars()
                .enumerate()
                .map(|(i, c)| {
                    if i == 0 {
                        c.to_string()
                    } else {
                        format!("{CONTINUATION}{c}")
                    }
                })
                .collect();
            chars.extend(word.chars());
            slots.insert(word.to_owned(), words.len());
            words.push((symbols, 1));
        }
    }
    if words.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let required = Vocab::NUM_SPECIAL + 2 * chars.len();
    if target_size < required {
        return Err(Error::VocabTooSmall {
            target: target_size,
            required,
        });
    }

    let mut entries: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    entries.extend(chars.iter().map(|c| c.to_string()));
    entries.extend(chars.iter().map(|c| format!("{CONTINUATION}{c}")));
    let mut known: std::collections::HashSet<String> = entries.iter().cloned().collect();

    while entries.len() < target_size {
        // (count, first-seen rank) per adjacent pair
        let mut pairs: HashMap<(&str, &str), (u64, usize)> = HashMap::new();
        let mut rank = 0usize;
        for (symbols, count) in &words {
            for w in symbols.windows(2) {
                let slot = pairs
                    .entry((w[0].as_str(), w[1].as_str()))
                    .or_insert((0, rank));
                slot.0 += count;
                rank += 1;
            }
        }
        let Some((&(left, right), _)) = pairs
            .iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        else {
            break;
        };
        let (left, right) = (left.to_owned(), right.to_owned());
        let merged = format!("{left}{}", strip_continuation(&right));
        for (symbols, _) in &mut words {
            if symbols.len() < 2 {
                continue;
            }
            let mut out = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
                    out.push(merged.clone());
                    i += 2;
                } else {
                    out.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            *symbols = out;
        }
        if known.insert(merged.clone()) {
            entries.push(merged);
        }
    }
    Vocab::from_entries(entries)
}

/// Subword span `[start, end]` (inclusive) of one word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WordSpan {
    pub word_index: usize,
    pub start: usize,
    pub end: usize,
}

impl WordSpan {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn positions(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TokenizedSequence {
    pub token_ids: Vec<u32>,
    pub words: Vec<WordSpan>,
    pub raw_words: Vec<String>,
}

impl TokenizedSequence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Greedy longest-match-first segmentation of one word. Words without a
/// complete segmentation become a single unknown token.
pub fn tokenize_word(word: &str, vocab: &Vocab) -> Vec<u32> {
    let bounds: Vec<usize> = word
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(word.len()))
        .collect();
    if bounds.len() < 2 {
        return vec![Vocab::UNK_ID];
    }
    let mut ids = Vec::new();
    let mut probe = String::new();
    let mut start = 0;
    while start + 1 < bounds.len() {
        let mut found = None;
        for end in (start + 1..bounds.len()).rev() {
            probe.clear();
            if start > 0 {
                probe.push_str(CONTINUATION);
            }
            probe.push_str(&word[bounds[start]..bounds[end]]);
            if let Some(id) = vocab.id(&probe) {
                if !vocab.is_special(id) {
                    found = Some((id, end));
                    break;
                }
            }
        }
        match found {
            Some((id, end)) => {
                ids.push(id);
                start = end;
            }
            None => return vec![Vocab::UNK_ID],
        }
    }
    ids
}

pub fn tokenize<S: AsRef<str>>(words: &[S], vocab: &Vocab) -> TokenizedSequence {
    let mut seq = TokenizedSequence::default();
    for (word_index, word) in words.iter().enumerate() {
        let word = word.as_ref();
        let pieces = tokenize_word(word, vocab);
        let start = seq.token_ids.len();
        seq.token_ids.extend_from_slice(&pieces);
        seq.words.push(WordSpan {
            word_index,
            start,
            end: seq.token_ids.len() - 1,
        });
        seq.raw_words.push(word.to_owned());
    }
    seq
}

/// Reassembles the surface form of a word from its subwords.
pub fn detokenize_word(span: WordSpan, seq: &TokenizedSequence, vocab: &Vocab) -> Result<String> {
    if span.start > span.end || span.end >= seq.len() {
        return Err(Error::InvalidSpan {
            start: span.start,
            end: span.end,
            len: seq.len(),
        });
    }
    let mut word = String::new();
    for &id in &seq.token_ids[span.positions()] {
        let token = vocab.token(id).ok_or(Error::TokenOutOfRange {
            id,
            vocab_size: vocab.len(),
        })?;
        word.push_str(strip_continuation(token));
    }
    Ok(word)
}
