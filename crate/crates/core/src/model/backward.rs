//! Exact reverse-mode gradients for [`super::forward`].
//!
//! Replays each sample's cached activations backwards and accumulates into
//! the gradient buffer of every parameter tensor. Padded positions carry
//! zero upstream gradient by construction and contribute nothing.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::tensor::Mat;

use super::forward::{head_slice, ForwardCache, LayerNormCache, SampleCache};
use super::{BlockParams, Parameters};

/// Layer-norm backward for one activation matrix. Returns the input
/// gradient and accumulates scale/offset gradients.
fn layer_norm_backward(
    cache: &LayerNormCache,
    scale: &[f64],
    dy: &Mat,
    dscale: &mut Mat,
    doffset: &mut Mat,
) -> Mat {
    let n = dy.cols();
    let nf = n as f64;
    let mut dx = Mat::zeros(dy.rows(), n);
    for r in 0..dy.rows() {
        let dy_row = dy.row(r);
        let xhat = cache.normalized.row(r);
        let istd = cache.inv_std[r];

        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for c in 0..n {
            let dxhat = dy_row[c] * scale[c];
            s1 += dxhat;
            s2 += dxhat * xhat[c];
        }
        let dx_row = dx.row_mut(r);
        for c in 0..n {
            let dxhat = dy_row[c] * scale[c];
            dx_row[c] = istd * (dxhat - s1 / nf - xhat[c] * s2 / nf);
        }

        let ds = dscale.row_mut(0);
        let do_ = doffset.row_mut(0);
        for c in 0..n {
            ds[c] += dy_row[c] * xhat[c];
            do_[c] += dy_row[c];
        }
    }
    dx
}

/// Scatter a `t × head_dim` gradient back into head `h`'s column block.
fn add_head_slice(dst: &mut Mat, src: &Mat, h: usize, head_dim: usize) {
    for r in 0..src.rows() {
        let d = &mut dst.row_mut(r)[h * head_dim..(h + 1) * head_dim];
        for (slot, &v) in d.iter_mut().zip(src.row(r)) {
            *slot += v;
        }
    }
}

fn block_backward(
    block: &mut BlockParams,
    cache: &super::forward::BlockCache,
    dy2: &Mat,
    num_heads: usize,
) -> Mat {
    let t = dy2.rows();
    let e = dy2.cols();
    let head_dim = e / num_heads;
    let scale = 1.0 / (head_dim as f64).sqrt();

    // Second layer norm.
    let dres2 = layer_norm_backward(
        &cache.ln2,
        block.ln2_scale.value.row(0),
        dy2,
        &mut block.ln2_scale.grad,
        &mut block.ln2_offset.grad,
    );

    // Residual: res2 = y1 + ffn_out.
    let mut dy1 = dres2.clone();

    // Feed-forward.
    block.ffn_w2.grad.add_matmul_tn(&cache.ffn_act, &dres2);
    block.ffn_b2.grad.add_assign(&dres2.col_sums());
    let mut dact = Mat::zeros(t, cache.ffn_act.cols());
    dact.add_matmul_nt(&dres2, &block.ffn_w2.value);
    let mut dpre = dact;
    for (g, &pre) in dpre
        .as_mut_slice()
        .iter_mut()
        .zip(cache.ffn_pre.as_slice())
    {
        if pre <= 0.0 {
            *g = 0.0;
        }
    }
    block.ffn_w1.grad.add_matmul_tn(&cache.y1, &dpre);
    block.ffn_b1.grad.add_assign(&dpre.col_sums());
    dy1.add_matmul_nt(&dpre, &block.ffn_w1.value);

    // First layer norm.
    let dres1 = layer_norm_backward(
        &cache.ln1,
        block.ln1_scale.value.row(0),
        &dy1,
        &mut block.ln1_scale.grad,
        &mut block.ln1_offset.grad,
    );

    // Residual: res1 = x_in + attn_out.
    let mut dx = dres1.clone();

    // Output projection of the attention block.
    block.wo.grad.add_matmul_tn(&cache.ctx, &dres1);
    block.bo.grad.add_assign(&dres1.col_sums());
    let mut dctx = Mat::zeros(t, e);
    dctx.add_matmul_nt(&dres1, &block.wo.value);

    // Per-head attention.
    let mut dq = Mat::zeros(t, e);
    let mut dk = Mat::zeros(t, e);
    let mut dv = Mat::zeros(t, e);
    for h in 0..num_heads {
        let qh = head_slice(&cache.q, h, head_dim);
        let kh = head_slice(&cache.k, h, head_dim);
        let vh = head_slice(&cache.v, h, head_dim);
        let ah = &cache.attn[h];
        let dctx_h = head_slice(&dctx, h, head_dim);

        let mut dvh = Mat::zeros(t, head_dim);
        dvh.add_matmul_tn(ah, &dctx_h);

        let mut dah = Mat::zeros(t, t);
        dah.add_matmul_nt(&dctx_h, &vh);

        // Softmax backward row-wise, folding in the score scale. Masked
        // keys carry zero attention weight, so their score gradient is zero.
        let mut ds = Mat::zeros(t, t);
        for r in 0..t {
            let a_row = ah.row(r);
            let da_row = dah.row(r);
            let dot: f64 = a_row.iter().zip(da_row).map(|(a, d)| a * d).sum();
            let ds_row = ds.row_mut(r);
            for j in 0..t {
                ds_row[j] = scale * a_row[j] * (da_row[j] - dot);
            }
        }

        let mut dqh = Mat::zeros(t, head_dim);
        dqh.add_matmul(&ds, &kh);
        let mut dkh = Mat::zeros(t, head_dim);
        dkh.add_matmul_tn(&ds, &qh);

        add_head_slice(&mut dq, &dqh, h, head_dim);
        add_head_slice(&mut dk, &dkh, h, head_dim);
        add_head_slice(&mut dv, &dvh, h, head_dim);
    }

    // Input projections of the attention block.
    block.wq.grad.add_matmul_tn(&cache.x_in, &dq);
    block.bq.grad.add_assign(&dq.col_sums());
    dx.add_matmul_nt(&dq, &block.wq.value);

    block.wk.grad.add_matmul_tn(&cache.x_in, &dk);
    block.bk.grad.add_assign(&dk.col_sums());
    dx.add_matmul_nt(&dk, &block.wk.value);

    block.wv.grad.add_matmul_tn(&cache.x_in, &dv);
    block.bv.grad.add_assign(&dv.col_sums());
    dx.add_matmul_nt(&dv, &block.wv.value);

    dx
}

fn sample_backward(params: &mut Parameters, cache: &SampleCache, dlogits: &[f64]) {
    let e = params.config().embed_dim;
    let heads = params.config().num_heads;

    // Head.
    let pooled = Mat::from_vec(1, e, cache.pooled.clone());
    let dz = Mat::from_vec(1, dlogits.len(), dlogits.to_vec());
    params.head_w.grad.add_matmul_tn(&pooled, &dz);
    params.head_b.grad.add_assign(&dz);
    let mut dpooled = Mat::zeros(1, e);
    dpooled.add_matmul_nt(&dz, &params.head_w.value);

    // Mean pool spreads the gradient evenly over valid positions.
    let mut dy = Mat::zeros(cache.t_pad, e);
    let inv_n = 1.0 / cache.n_valid as f64;
    for t in 0..cache.n_valid {
        let row = dy.row_mut(t);
        for (slot, &g) in row.iter_mut().zip(dpooled.row(0)) {
            *slot = g * inv_n;
        }
    }

    for (block, bcache) in params
        .blocks
        .iter_mut()
        .zip(cache.blocks.iter())
        .rev()
    {
        dy = block_backward(block, bcache, &dy, heads);
    }

    // Input projection. Padded observation rows are zero, so they add
    // nothing to the weight gradient.
    params.input_w.grad.add_matmul_tn(&cache.obs, &dy);
    params.input_b.grad.add_assign(&dy.col_sums());
}

/// Accumulate exact gradients for the batch that produced `cache`, given the
/// loss gradient with respect to each sample's logits.
pub fn backward(
    params: &mut Parameters,
    cache: &ForwardCache,
    logit_grads: &[Vec<f64>],
) -> Result<()> {
    if logit_grads.len() != cache.samples.len() {
        return Err(invalid(format!(
            "{} gradient rows for a batch of {}",
            logit_grads.len(),
            cache.samples.len()
        )));
    }
    let cfg = params.config();
    for (i, g) in logit_grads.iter().enumerate() {
        if g.len() != cfg.num_classes {
            return Err(invalid(format!(
                "gradient row {i} has length {}, expected {}",
                g.len(),
                cfg.num_classes
            )));
        }
    }
    for (i, s) in cache.samples.iter().enumerate() {
        if s.blocks.len() != cfg.num_blocks
            || s.x0.cols() != cfg.embed_dim
            || s.obs.cols() != cfg.channels
        {
            return Err(invalid(format!(
                "cache sample {i} does not match the model configuration"
            )));
        }
    }

    for (sample, dlogits) in cache.samples.iter().zip(logit_grads) {
        sample_backward(params, sample, dlogits);
    }
    Ok(())
}
