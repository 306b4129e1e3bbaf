//! Batched forward pass with the activation cache the backward pass replays.
//!
//! Samples in a batch are padded to the longest sequence; padded positions
//! are excluded from attention (masked keys) and from the mean pool, so they
//! can never influence logits or gradients.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::TimeSeriesSample;
use crate::error::{invalid, Result};
use crate::tensor::Mat;

use super::{sinusoidal_encoding, BlockParams, Parameters, Tensor, LAYER_NORM_EPS};

pub(crate) struct LayerNormCache {
    pub normalized: Mat,
    pub inv_std: Vec<f64>,
}

pub(crate) struct BlockCache {
    pub x_in: Mat,
    pub q: Mat,
    pub k: Mat,
    pub v: Mat,
    /// Per-head attention weights, each `t_pad × t_pad`.
    pub attn: Vec<Mat>,
    /// Concatenated per-head context before the output projection.
    pub ctx: Mat,
    pub ln1: LayerNormCache,
    pub y1: Mat,
    pub ffn_pre: Mat,
    pub ffn_act: Mat,
    pub ln2: LayerNormCache,
    pub y2: Mat,
}

pub(crate) struct SampleCache {
    pub n_valid: usize,
    pub t_pad: usize,
    pub obs: Mat,
    pub x0: Mat,
    pub blocks: Vec<BlockCache>,
    pub pooled: Vec<f64>,
}

/// Activations retained by [`forward`] for the matching [`super::backward`].
pub struct ForwardCache {
    pub(crate) samples: Vec<SampleCache>,
}

impl ForwardCache {
    pub fn batch_len(&self) -> usize {
        self.samples.len()
    }
}

/// `y = x W + b` with the bias row broadcast over positions.
pub(crate) fn linear(x: &Mat, w: &Tensor, b: &Tensor) -> Mat {
    let mut out = x.matmul(&w.value);
    let bias = b.value.row(0);
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for (o, &bv) in row.iter_mut().zip(bias) {
            *o += bv;
        }
    }
    out
}

/// Per-position layer norm with learned scale/offset.
pub(crate) fn layer_norm(x: &Mat, scale: &Tensor, offset: &Tensor) -> (Mat, LayerNormCache) {
    let n = x.cols() as f64;
    let mut normalized = Mat::zeros(x.rows(), x.cols());
    let mut out = Mat::zeros(x.rows(), x.cols());
    let mut inv_std = vec![0.0; x.rows()];
    let s = scale.value.row(0);
    let o = offset.value.row(0);
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let istd = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std[r] = istd;
        let nrow = normalized.row_mut(r);
        for (slot, &v) in nrow.iter_mut().zip(row) {
            *slot = (v - mean) * istd;
        }
        let orow = out.row_mut(r);
        for c in 0..x.cols() {
            orow[c] = s[c] * normalized.at(r, c) + o[c];
        }
    }
    (out, LayerNormCache { normalized, inv_std })
}

/// Copy the column block of head `h` into a dense `t × head_dim` matrix.
pub(crate) fn head_slice(x: &Mat, h: usize, head_dim: usize) -> Mat {
    let mut out = Mat::zeros(x.rows(), head_dim);
    for r in 0..x.rows() {
        let src = &x.row(r)[h * head_dim..(h + 1) * head_dim];
        out.row_mut(r).copy_from_slice(src);
    }
    out
}

fn block_forward(x: Mat, block: &BlockParams, n_valid: usize, num_heads: usize) -> BlockCache {
    let t = x.rows();
    let e = x.cols();
    let head_dim = e / num_heads;
    let scale = 1.0 / (head_dim as f64).sqrt();

    let q = linear(&x, &block.wq, &block.bq);
    let k = linear(&x, &block.wk, &block.bk);
    let v = linear(&x, &block.wv, &block.bv);

    let mut ctx = Mat::zeros(t, e);
    let mut attn = Vec::with_capacity(num_heads);
    for h in 0..num_heads {
        let qh = head_slice(&q, h, head_dim);
        let kh = head_slice(&k, h, head_dim);
        let vh = head_slice(&v, h, head_dim);

        let mut scores = Mat::zeros(t, t);
        scores.add_matmul_nt(&qh, &kh);
        for r in 0..t {
            let row = scores.row_mut(r);
            for (j, slot) in row.iter_mut().enumerate() {
                if j < n_valid {
                    *slot *= scale;
                } else {
                    *slot = f64::NEG_INFINITY;
                }
            }
        }
        // Row-wise softmax over the valid keys.
        for r in 0..t {
            let row = scores.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for s in row.iter_mut() {
                *s = (*s - max).exp();
                total += *s;
            }
            for s in row.iter_mut() {
                *s /= total;
            }
        }
        let ctx_h = scores.matmul(&vh);
        for r in 0..t {
            let dst = &mut ctx.row_mut(r)[h * head_dim..(h + 1) * head_dim];
            dst.copy_from_slice(ctx_h.row(r));
        }
        attn.push(scores);
    }

    let attn_out = linear(&ctx, &block.wo, &block.bo);
    let res1 = x.add(&attn_out);
    let (y1, ln1) = layer_norm(&res1, &block.ln1_scale, &block.ln1_offset);

    let ffn_pre = linear(&y1, &block.ffn_w1, &block.ffn_b1);
    let mut ffn_act = ffn_pre.clone();
    for v in ffn_act.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let ffn_out = linear(&ffn_act, &block.ffn_w2, &block.ffn_b2);
    let res2 = y1.add(&ffn_out);
    let (y2, ln2) = layer_norm(&res2, &block.ln2_scale, &block.ln2_offset);

    BlockCache {
        x_in: x,
        q,
        k,
        v,
        attn,
        ctx,
        ln1,
        y1,
        ffn_pre,
        ffn_act,
        ln2,
        y2,
    }
}

/// Run the classifier over a batch. Returns per-sample logits and the
/// activation cache consumed by [`super::backward`].
pub fn forward(
    batch: &[TimeSeriesSample],
    params: &Parameters,
) -> Result<(Vec<Vec<f64>>, ForwardCache)> {
    let cfg = params.config();
    if batch.is_empty() {
        return Err(invalid("forward needs at least one sample"));
    }
    for (i, s) in batch.iter().enumerate() {
        if s.channels() != cfg.channels {
            return Err(invalid(format!(
                "sample {i} has {} channels, model expects {}",
                s.channels(),
                cfg.channels
            )));
        }
        if s.n_t() > cfg.max_len {
            return Err(invalid(format!(
                "sample {i} has {} observations, maximum is {}",
                s.n_t(),
                cfg.max_len
            )));
        }
        if let Some(&day) = s.days().iter().find(|&&d| d >= cfg.max_len) {
            return Err(invalid(format!(
                "sample {i} has day {day} beyond maximum length {}",
                cfg.max_len
            )));
        }
    }

    let t_pad = batch.iter().map(|s| s.n_t()).max().unwrap();
    let e = cfg.embed_dim;
    let mut logits = Vec::with_capacity(batch.len());
    let mut caches = Vec::with_capacity(batch.len());

    for sample in batch {
        let n_valid = sample.n_t();
        // Zero-padded observation matrix; padded rows stay zero and are
        // masked out of attention and pooling below.
        let mut obs = Mat::zeros(t_pad, cfg.channels);
        for t in 0..n_valid {
            obs.row_mut(t).copy_from_slice(sample.observations().row(t));
        }

        let mut x0 = linear(&obs, &params.input_w, &params.input_b);
        for t in n_valid..t_pad {
            x0.row_mut(t).fill(0.0);
        }
        for (t, &day) in sample.days().iter().enumerate() {
            let pe = sinusoidal_encoding(day, e, cfg.max_len)?;
            let row = x0.row_mut(t);
            for (slot, p) in row.iter_mut().zip(pe) {
                *slot += p;
            }
        }

        let mut blocks = Vec::with_capacity(cfg.num_blocks);
        let mut x = x0.clone();
        for block in &params.blocks {
            let cache = block_forward(x, block, n_valid, cfg.num_heads);
            x = cache.y2.clone();
            blocks.push(cache);
        }

        let mut pooled = vec![0.0; e];
        for t in 0..n_valid {
            for (p, &v) in pooled.iter_mut().zip(x.row(t)) {
                *p += v;
            }
        }
        for p in &mut pooled {
            *p /= n_valid as f64;
        }

        let pooled_mat = Mat::from_vec(1, e, pooled.clone());
        let z = linear(&pooled_mat, &params.head_w, &params.head_b);
        logits.push(z.row(0).to_vec());

        caches.push(SampleCache {
            n_valid,
            t_pad,
            obs,
            x0,
            blocks,
            pooled,
        });
    }

    Ok((logits, ForwardCache { samples: caches }))
}
