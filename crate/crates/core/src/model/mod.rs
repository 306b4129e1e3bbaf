//! Transformer-encoder classifier over day-indexed observations.
//!
//! Per sample: each observation is projected to the embedding dimension and
//! shifted by a sinusoidal encoding of its calendar day; a stack of post-norm
//! encoder blocks (masked multi-head self-attention, then a two-layer ReLU
//! feed-forward, each with residual + layer norm) runs over the valid
//! positions; a masked mean pool yields one embedding vector, and a single
//! linear head maps it to class logits. [`backward`] produces exact
//! reverse-mode gradients for every parameter tensor.

#[allow(unused_imports)]
use num_traits::Float;

mod backward;
mod forward;

pub use backward::backward;
pub use forward::{forward, ForwardCache};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::rng::Rng;
use crate::tensor::Mat;

/// Epsilon inside the layer-norm variance root. Small enough at 64-bit that
/// normalized activations carry unit variance to well below 1e-6.
pub(crate) const LAYER_NORM_EPS: f64 = 1e-12;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    /// Input channels per observation.
    pub channels: usize,
    /// Embedding width; even and divisible by `num_heads`.
    pub embed_dim: usize,
    pub num_heads: usize,
    pub ffn_hidden: usize,
    pub num_blocks: usize,
    /// Exclusive upper bound on day positions (a full year by default).
    pub max_len: usize,
    pub num_classes: usize,
}

impl ModelConfig {
    /// Desk-scale configuration used throughout the tests.
    pub fn small(channels: usize, num_classes: usize) -> Self {
        ModelConfig {
            channels,
            embed_dim: 32,
            num_heads: 2,
            ffn_hidden: 64,
            num_blocks: 1,
            max_len: 366,
            num_classes,
        }
    }

    /// Full-scale configuration (128-wide, four heads, 256 hidden).
    pub fn large(channels: usize, num_classes: usize) -> Self {
        ModelConfig {
            channels,
            embed_dim: 128,
            num_heads: 4,
            ffn_hidden: 256,
            num_blocks: 1,
            max_len: 366,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0
            || self.embed_dim == 0
            || self.num_heads == 0
            || self.ffn_hidden == 0
            || self.num_blocks == 0
            || self.max_len == 0
        {
            return Err(invalid("all model dimensions must be at least 1"));
        }
        if self.embed_dim % 2 != 0 {
            return Err(invalid(format!(
                "embed_dim must be even, got {}",
                self.embed_dim
            )));
        }
        if self.embed_dim % self.num_heads != 0 {
            return Err(invalid(format!(
                "num_heads {} must divide embed_dim {}",
                self.num_heads, self.embed_dim
            )));
        }
        if self.num_classes < 2 {
            return Err(invalid("need at least 2 classes"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }
}

/// A trainable tensor paired with its same-shape gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub value: Mat,
    pub grad: Mat,
}

impl Tensor {
    fn new(rows: usize, cols: usize) -> Self {
        Tensor {
            value: Mat::zeros(rows, cols),
            grad: Mat::zeros(rows, cols),
        }
    }

    pub fn rows(&self) -> usize {
        self.value.rows()
    }

    pub fn cols(&self) -> usize {
        self.value.cols()
    }
}

/// Parameters of one encoder block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln1_scale: Tensor,
    pub ln1_offset: Tensor,
    pub ffn_w1: Tensor,
    pub ffn_b1: Tensor,
    pub ffn_w2: Tensor,
    pub ffn_b2: Tensor,
    pub ln2_scale: Tensor,
    pub ln2_offset: Tensor,
}

impl BlockParams {
    fn new(cfg: &ModelConfig) -> Self {
        let e = cfg.embed_dim;
        let h = cfg.ffn_hidden;
        BlockParams {
            wq: Tensor::new(e, e),
            bq: Tensor::new(1, e),
            wk: Tensor::new(e, e),
            bk: Tensor::new(1, e),
            wv: Tensor::new(e, e),
            bv: Tensor::new(1, e),
            wo: Tensor::new(e, e),
            bo: Tensor::new(1, e),
            ln1_scale: Tensor::new(1, e),
            ln1_offset: Tensor::new(1, e),
            ffn_w1: Tensor::new(e, h),
            ffn_b1: Tensor::new(1, h),
            ffn_w2: Tensor::new(h, e),
            ffn_b2: Tensor::new(1, e),
            ln2_scale: Tensor::new(1, e),
            ln2_offset: Tensor::new(1, e),
        }
    }
}

/// All trainable tensors: the backbone (input projection + encoder blocks)
/// and the classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    cfg: ModelConfig,
    pub input_w: Tensor,
    pub input_b: Tensor,
    pub blocks: Vec<BlockParams>,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

fn xavier_fill(mat: &mut Mat, fan_in: usize, fan_out: usize, rng: &mut Rng) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in mat.as_mut_slice() {
        *v = bound * (2.0 * rng.next_f64() - 1.0);
    }
}

impl Parameters {
    /// Xavier-uniform weights, zero biases, unit layer-norm scales.
    pub fn init(cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let e = cfg.embed_dim;
        let mut params = Parameters {
            cfg: cfg.clone(),
            input_w: Tensor::new(cfg.channels, e),
            input_b: Tensor::new(1, e),
            blocks: (0..cfg.num_blocks).map(|_| BlockParams::new(cfg)).collect(),
            head_w: Tensor::new(e, cfg.num_classes),
            head_b: Tensor::new(1, cfg.num_classes),
        };
        xavier_fill(&mut params.input_w.value, cfg.channels, e, rng);
        for block in &mut params.blocks {
            for w in [&mut block.wq, &mut block.wk, &mut block.wv, &mut block.wo] {
                xavier_fill(&mut w.value, e, e, rng);
            }
            xavier_fill(&mut block.ffn_w1.value, e, cfg.ffn_hidden, rng);
            xavier_fill(&mut block.ffn_w2.value, cfg.ffn_hidden, e, rng);
            block.ln1_scale.value.fill(1.0);
            block.ln2_scale.value.fill(1.0);
        }
        xavier_fill(&mut params.head_w.value, e, cfg.num_classes, rng);
        Ok(params)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Re-draw the classification head for `num_classes` target classes,
    /// leaving every backbone tensor untouched.
    pub fn reset_head(&mut self, num_classes: usize, rng: &mut Rng) -> Result<()> {
        if num_classes < 2 {
            return Err(invalid("need at least 2 classes"));
        }
        let e = self.cfg.embed_dim;
        self.cfg.num_classes = num_classes;
        self.head_w = Tensor::new(e, num_classes);
        self.head_b = Tensor::new(1, num_classes);
        xavier_fill(&mut self.head_w.value, e, num_classes, rng);
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.grad.fill(0.0);
        }
    }

    /// Named tensors in canonical order (the checkpoint and optimizer order).
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        out.push(("input.w".into(), &self.input_w));
        out.push(("input.b".into(), &self.input_b));
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.attn.wq"), &b.wq));
            out.push((format!("block{i}.attn.bq"), &b.bq));
            out.push((format!("block{i}.attn.wk"), &b.wk));
            out.push((format!("block{i}.attn.bk"), &b.bk));
            out.push((format!("block{i}.attn.wv"), &b.wv));
            out.push((format!("block{i}.attn.bv"), &b.bv));
            out.push((format!("block{i}.attn.wo"), &b.wo));
            out.push((format!("block{i}.attn.bo"), &b.bo));
            out.push((format!("block{i}.ln1.scale"), &b.ln1_scale));
            out.push((format!("block{i}.ln1.offset"), &b.ln1_offset));
            out.push((format!("block{i}.ffn.w1"), &b.ffn_w1));
            out.push((format!("block{i}.ffn.b1"), &b.ffn_b1));
            out.push((format!("block{i}.ffn.w2"), &b.ffn_w2));
            out.push((format!("block{i}.ffn.b2"), &b.ffn_b2));
            out.push((format!("block{i}.ln2.scale"), &b.ln2_scale));
            out.push((format!("block{i}.ln2.offset"), &b.ln2_offset));
        }
        out.push(("head.w".into(), &self.head_w));
        out.push(("head.b".into(), &self.head_b));
        out
    }

    /// Mutable view of the named tensors, same order as [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        out.push(("input.w".into(), &mut self.input_w));
        out.push(("input.b".into(), &mut self.input_b));
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("block{i}.attn.wq"), &mut b.wq));
            out.push((format!("block{i}.attn.bq"), &mut b.bq));
            out.push((format!("block{i}.attn.wk"), &mut b.wk));
            out.push((format!("block{i}.attn.bk"), &mut b.bk));
            out.push((format!("block{i}.attn.wv"), &mut b.wv));
            out.push((format!("block{i}.attn.bv"), &mut b.bv));
            out.push((format!("block{i}.attn.wo"), &mut b.wo));
            out.push((format!("block{i}.attn.bo"), &mut b.bo));
            out.push((format!("block{i}.ln1.scale"), &mut b.ln1_scale));
            out.push((format!("block{i}.ln1.offset"), &mut b.ln1_offset));
            out.push((format!("block{i}.ffn.w1"), &mut b.ffn_w1));
            out.push((format!("block{i}.ffn.b1"), &mut b.ffn_b1));
            out.push((format!("block{i}.ffn.w2"), &mut b.ffn_w2));
            out.push((format!("block{i}.ffn.b2"), &mut b.ffn_b2));
            out.push((format!("block{i}.ln2.scale"), &mut b.ln2_scale));
            out.push((format!("block{i}.ln2.offset"), &mut b.ln2_offset));
        }
        out.push(("head.w".into(), &mut self.head_w));
        out.push(("head.b".into(), &mut self.head_b));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors()
            .iter()
            .map(|(_, t)| t.rows() * t.cols())
            .sum()
    }
}

/// Additive sinusoidal encoding of a calendar day:
/// `pe[2i] = sin(day / 10000^{2i/e})`, `pe[2i+1] = cos(day / 10000^{2i/e})`.
pub fn sinusoidal_encoding(day: usize, embed_dim: usize, max_len: usize) -> Result<Vec<f64>> {
    if day >= max_len {
        return Err(invalid(format!(
            "day {day} out of range for maximum length {max_len}"
        )));
    }
    if embed_dim == 0 || embed_dim % 2 != 0 {
        return Err(invalid(format!(
            "embed_dim must be positive and even, got {embed_dim}"
        )));
    }
    let mut pe = alloc::vec![0.0; embed_dim];
    for i in 0..embed_dim / 2 {
        let rate = 10_000.0f64.powf(2.0 * i as f64 / embed_dim as f64);
        let angle = day as f64 / rate;
        pe[2 * i] = angle.sin();
        pe[2 * i + 1] = angle.cos();
    }
    Ok(pe)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_day_zero() {
        let pe = sinusoidal_encoding(0, 8, 366).unwrap();
        for i in 0..4 {
            assert_eq!(pe[2 * i], 0.0);
            assert_eq!(pe[2 * i + 1], 1.0);
        }
    }

    #[test]
    fn encoding_norm_is_half_dim() {
        for day in [0, 1, 57, 365] {
            let pe = sinusoidal_encoding(day, 32, 366).unwrap();
            let norm2: f64 = pe.iter().map(|v| v * v).sum();
            assert!((norm2 - 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn encoding_injective_over_year() {
        let codes: Vec<Vec<f64>> = (0..366)
            .map(|d| sinusoidal_encoding(d, 4, 366).unwrap())
            .collect();
        for a in 0..codes.len() {
            for b in a + 1..codes.len() {
                assert_ne!(codes[a], codes[b], "days {a} and {b} collide");
            }
        }
    }

    #[test]
    fn encoding_rejects_bad_inputs() {
        assert!(sinusoidal_encoding(366, 8, 366).is_err());
        assert!(sinusoidal_encoding(0, 7, 366).is_err());
        assert!(sinusoidal_encoding(0, 0, 366).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = ModelConfig::small(13, 4);
        assert!(cfg.validate().is_ok());
        cfg.num_heads = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::small(13, 4);
        cfg.embed_dim = 31;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::small(13, 4);
        cfg.num_classes = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let cfg = ModelConfig::small(13, 4);
        let a = Parameters::init(&cfg, &mut Rng::new(1)).unwrap();
        let b = Parameters::init(&cfg, &mut Rng::new(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.head_w.rows(), 32);
        assert_eq!(a.head_w.cols(), 4);
        assert_eq!(a.tensors().len(), 2 + 16 + 2);
    }

    #[test]
    fn reset_head_keeps_backbone_bitwise() {
        let cfg = ModelConfig::small(13, 4);
        let mut params = Parameters::init(&cfg, &mut Rng::new(1)).unwrap();
        let before: Vec<(String, Vec<u64>)> = params
            .tensors()
            .into_iter()
            .filter(|(name, _)| !name.starts_with("head."))
            .map(|(name, t)| {
                (
                    name,
                    t.value.as_slice().iter().map(|v| v.to_bits()).collect(),
                )
            })
            .collect();
        params.reset_head(9, &mut Rng::new(2)).unwrap();
        assert_eq!(params.head_w.cols(), 9);
        assert_eq!(params.head_b.cols(), 9);
        assert_eq!(params.config().num_classes, 9);
        let after: Vec<(String, Vec<u64>)> = params
            .tensors()
            .into_iter()
            .filter(|(name, _)| !name.starts_with("head."))
            .map(|(name, t)| {
                (
                    name,
                    t.value.as_slice().iter().map(|v| v.to_bits()).collect(),
                )
            })
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn reset_head_same_seed_same_head() {
        let cfg = ModelConfig::small(5, 4);
        let mut a = Parameters::init(&cfg, &mut Rng::new(1)).unwrap();
        let mut b = Parameters::init(&cfg, &mut Rng::new(1)).unwrap();
        a.reset_head(7, &mut Rng::new(99)).unwrap();
        b.reset_head(7, &mut Rng::new(99)).unwrap();
        assert_eq!(a.head_w, b.head_w);
        assert_eq!(a.head_b, b.head_b);
    }
}
