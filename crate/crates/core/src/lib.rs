//! Coreference-aware masked language model pretraining at desk scale.
//!
//! The crate covers the whole pipeline:
//!
//! - [`tokenizer`]: subword vocabulary and greedy longest-match tokenization
//!   with word alignment.
//! - [`mentions`]: part-of-speech tagging and grouping of repeated nouns.
//! - [`masking`]: mention reference masking combined with random word masking.
//! - [`corpus`]: sequence packing, sharded binary instance files and masking
//!   statistics.
//! - [`model`]: a small transformer encoder with explicit backward pass.
//! - [`objectives`]: the copy-based mention reference loss and the masked LM
//!   loss.
//! - [`trainer`]: Adam with warmup and linear decay, checkpoints and metrics.
//! - [`probe`]: masked mention recovery and candidate disambiguation.
//!
//! Runnable walkthroughs live in `crates/core/examples/`.

pub mod config;
pub mod corpus;
pub mod error;
pub mod masking;
pub mod mentions;
pub mod model;
pub mod objectives;
pub mod probe;
pub mod rng;
pub mod synthetic;
pub mod tokenizer;
pub mod trainer;

pub use error::{Error, Result};
