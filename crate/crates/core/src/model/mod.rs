//! A small pre-norm transformer encoder over `f64`.
//!
//! Parameters live in plain row-major vectors. [`ModelParams`] doubles as
//! the gradient container: a gradient is a `ModelParams` of zeros with the
//! same shapes, and optimizers walk both in declaration order.

mod encoder;
pub mod ops;

use std::fs;
use std::path::Path;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

pub use encoder::{backward, forward, forward_with_dropout, EncoderCache, EncoderOutput};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CPKM";
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_positions: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 512,
            hidden: 32,
            layers: 2,
            heads: 2,
            ffn: 64,
            max_positions: 128,
            dropout: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("heads", self.heads),
            ("ffn", self.ffn),
            ("max_positions", self.max_positions),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "heads must divide hidden ({} heads, hidden {})",
                self.heads, self.hidden
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    pub wq: Vec<f64>,
    pub bq: Vec<f64>,
    pub wk: Vec<f64>,
    pub bk: Vec<f64>,
    pub wv: Vec<f64>,
    pub bv: Vec<f64>,
    pub wo: Vec<f64>,
    pub bo: Vec<f64>,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl LayerParams {
    fn zeros(d: usize, f: usize) -> Self {
        LayerParams {
            ln1_gain: vec![0.0; d],
            ln1_bias: vec![0.0; d],
            wq: vec![0.0; d * d],
            bq: vec![0.0; d],
            wk: vec![0.0; d * d],
            bk: vec![0.0; d],
            wv: vec![0.0; d * d],
            bv: vec![0.0; d],
            wo: vec![0.0; d * d],
            bo: vec![0.0; d],
            ln2_gain: vec![0.0; d],
            ln2_bias: vec![0.0; d],
            w1: vec![0.0; d * f],
            b1: vec![0.0; f],
            w2: vec![0.0; f * d],
            b2: vec![0.0; d],
        }
    }
}

/// Kind of tensor, which decides its initialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorKind {
    Weight,
    Bias,
    Gain,
    CopyGate,
}

/// All trainable tensors. The token embedding is tied with the MLM output
/// projection; `copy_gate` scales each dimension of the copy score.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub token_embedding: Vec<f64>,
    pub position_embedding: Vec<f64>,
    pub layers: Vec<LayerParams>,
    pub final_ln_gain: Vec<f64>,
    pub final_ln_bias: Vec<f64>,
    pub head_dense: Vec<f64>,
    pub head_dense_bias: Vec<f64>,
    pub head_ln_gain: Vec<f64>,
    pub head_ln_bias: Vec<f64>,
    pub output_bias: Vec<f64>,
    pub copy_gate: Vec<f64>,
}

macro_rules! tensor_list {
    ($self:ident, $iter:ident, $($ref:tt)*) => {{
        let mut out = Vec::new();
        out.push(("token_embedding".to_string(), TensorKind::Weight, $($ref)* $self.token_embedding));
        out.push(("position_embedding".to_string(), TensorKind::Weight, $($ref)* $self.position_embedding));
        for (i, l) in $self.layers.$iter().enumerate() {
            out.push((format!("layer{i}.ln1_gain"), TensorKind::Gain, $($ref)* l.ln1_gain));
            out.push((format!("layer{i}.ln1_bias"), TensorKind::Bias, $($ref)* l.ln1_bias));
            out.push((format!("layer{i}.wq"), TensorKind::Weight, $($ref)* l.wq));
            out.push((format!("layer{i}.bq"), TensorKind::Bias, $($ref)* l.bq));
            out.push((format!("layer{i}.wk"), TensorKind::Weight, $($ref)* l.wk));
            out.push((format!("layer{i}.bk"), TensorKind::Bias, $($ref)* l.bk));
            out.push((format!("layer{i}.wv"), TensorKind::Weight, $($ref)* l.wv));
            out.push((format!("layer{i}.bv"), TensorKind::Bias, $($ref)* l.bv));
            out.push((format!("layer{i}.wo"), TensorKind::Weight, $($ref)* l.wo));
            out.push((format!("layer{i}.bo"), TensorKind::Bias, $($ref)* l.bo));
            out.push((format!("layer{i}.ln2_gain"), TensorKind::Gain, $($ref)* l.ln2_gain));
            out.push((format!("layer{i}.ln2_bias"), TensorKind::Bias, $($ref)* l.ln2_bias));
            out.push((format!("layer{i}.w1"), TensorKind::Weight, $($ref)* l.w1));
            out.push((format!("layer{i}.b1"), TensorKind::Bias, $($ref)* l.b1));
            out.push((format!("layer{i}.w2"), TensorKind::Weight, $($ref)* l.w2));
            out.push((format!("layer{i}.b2"), TensorKind::Bias, $($ref)* l.b2));
        }
        out.push(("final_ln_gain".to_string(), TensorKind::Gain, $($ref)* $self.final_ln_gain));
        out.push(("final_ln_bias".to_string(), TensorKind::Bias, $($ref)* $self.final_ln_bias));
        out.push(("head_dense".to_string(), TensorKind::Weight, $($ref)* $self.head_dense));
        out.push(("head_dense_bias".to_string(), TensorKind::Bias, $($ref)* $self.head_dense_bias));
        out.push(("head_ln_gain".to_string(), TensorKind::Gain, $($ref)* $self.head_ln_gain));
        out.push(("head_ln_bias".to_string(), TensorKind::Bias, $($ref)* $self.head_ln_bias));
        out.push(("output_bias".to_string(), TensorKind::Bias, $($ref)* $self.output_bias));
        out.push(("copy_gate".to_string(), TensorKind::CopyGate, $($ref)* $self.copy_gate));
        out
    }};
}

impl ModelParams {
    /// All-zero tensors with the shapes of `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (d, v) = (cfg.hidden, cfg.vocab_size);
        ModelParams {
            config: cfg.clone(),
            token_embedding: vec![0.0; v * d],
            position_embedding: vec![0.0; cfg.max_positions * d],
            layers: (0..cfg.layers)
                .map(|_| LayerParams::zeros(d, cfg.ffn))
                .collect(),
            final_ln_gain: vec![0.0; d],
            final_ln_bias: vec![0.0; d],
            head_dense: vec![0.0; d * d],
            head_dense_bias: vec![0.0; d],
            head_ln_gain: vec![0.0; d],
            head_ln_bias: vec![0.0; d],
            output_bias: vec![0.0; v],
            copy_gate: vec![0.0; d],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    /// Tensors in declaration order (the checkpoint order).
    pub fn tensors(&self) -> Vec<(String, TensorKind, &Vec<f64>)> {
        tensor_list!(self, iter, &)
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, TensorKind, &mut Vec<f64>)> {
        let this = self;
        tensor_list!(this, iter_mut, &mut)
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    /// Flat copy of every parameter in declaration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .into_iter()
            .flat_map(|t| t.2.iter().copied())
            .collect()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, _, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// `self += other`, elementwise, in declaration order.
    pub fn add_assign(&mut self, other: &ModelParams) {
        for ((_, _, a), (_, _, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.2.iter().all(|v| v.is_finite()))
    }

    /// Serializes to the checkpoint layout: magic, config block, tensors.
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut out = Vec::with_capacity(40 + self.num_params() * 8);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        for v in [
            c.vocab_size,
            c.hidden,
            c.layers,
            c.heads,
            c.ffn,
            c.max_positions,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&c.dropout.to_le_bytes());
        for (_, _, t) in self.tensors() {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 36 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Corrupt("not a CPKM checkpoint".into()));
        }
        let u =
            |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let config = ModelConfig {
            vocab_size: u(0),
            hidden: u(1),
            layers: u(2),
            heads: u(3),
            ffn: u(4),
            max_positions: u(5),
            dropout: f64::from_le_bytes(bytes[28..36].try_into().unwrap()),
        };
        config.validate()?;
        let mut params = ModelParams::zeros(&config);
        let expected = 36 + params.num_params() * 8;
        if bytes.len() != expected {
            return Err(Error::Corrupt(format!(
                "checkpoint holds {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        let mut at = 36;
        for (_, _, t) in params.tensors_mut() {
            for v in t.iter_mut() {
                *v = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
                at += 8;
            }
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Weights ~ N(0, 0.02), biases 0, layer-norm gains 1, copy gate 1.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ModelParams> {
    cfg.validate()?;
    let mut params = ModelParams::zeros(cfg);
    let mut rng = stream(seed, Purpose::Init, 0);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    for (_, kind, t) in params.tensors_mut() {
        match kind {
            TensorKind::Weight => t.iter_mut().for_each(|v| *v = normal.sample(&mut rng)),
            TensorKind::Gain | TensorKind::CopyGate => t.fill(1.0),
            TensorKind::Bias => {}
        }
    }
    Ok(params)
}
