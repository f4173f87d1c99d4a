use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("target vocabulary size {target} is below the {required} entries needed for special tokens and the character alphabet")]
    VocabTooSmall { target: usize, required: usize },
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error("invalid span ({start}, {end}) for a sequence of length {len}")]
    InvalidSpan {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("malformed tagged input: {0}")]
    MalformedTags(String),
    #[error("masking plan invariant violated: {0}")]
    PlanInvariant(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty candidate set")]
    EmptyCandidates,
    #[error("candidate ({start}, {end}) is not in the candidate set")]
    CandidateNotInSet { start: usize, end: usize },
    #[error("checksum mismatch in {path} at record {record}")]
    ChecksumMismatch { path: PathBuf, record: usize },
    #[error("truncated record in {path} at record {record}")]
    TruncatedRecord { path: PathBuf, record: usize },
    #[error("unsupported format version {found} in {path} (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: u16,
        expected: u16,
    },
    #[error("bad magic in {0}")]
    BadMagic(PathBuf),
    #[error("corrupt data: {0}")]
    Corrupt(String),
    #[error("non-finite loss at step {step}; offending batch: {dump}")]
    NonFiniteLoss { step: usize, dump: String },
    #[error("probe item invalid: {0}")]
    Probe(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
