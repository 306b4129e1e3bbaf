//! Central finite-difference audit of the analytic gradients.
//!
//! Perturbs sampled coordinates of every parameter tensor and compares the
//! numeric slope of the batch loss against the value accumulated by
//! [`crate::model::backward`]. Runs the four loss variants (cross-entropy and
//! focal, each with and without a pseudo-prior adjustment); the numeric side
//! only ever calls the forward pass, so it is independent of the code it
//! checks.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::string::String;
use alloc::vec::Vec;

use crate::data::TimeSeriesSample;
use crate::dipa::{self, LogitVector, LossKind};
use crate::dirichlet::{sample_symmetric_dirichlet, SimplexVector};
use crate::error::Result;
use crate::model::{backward, forward, ModelConfig, Parameters};
use crate::rng::Rng;
use crate::tensor::Mat;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub model: ModelConfig,
    pub batch_size: usize,
    pub seq_len: usize,
    /// How many coordinates to sample per tensor (all, if the tensor is
    /// smaller).
    pub coords_per_tensor: usize,
    /// Central-difference step.
    pub step: f64,
    /// Maximum admissible relative error.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            model: ModelConfig {
                channels: 3,
                embed_dim: 8,
                num_heads: 2,
                ffn_hidden: 16,
                num_blocks: 1,
                max_len: 366,
                num_classes: 4,
            },
            batch_size: 2,
            seq_len: 6,
            coords_per_tensor: 50,
            step: 1e-5,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TensorReport {
    pub tensor: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct VariantReport {
    pub label: String,
    pub tensors: Vec<TensorReport>,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub variants: Vec<VariantReport>,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

struct Variant {
    label: String,
    kind: LossKind,
    gamma: f64,
    prior: Option<SimplexVector>,
    tau: f64,
}

fn batch_loss(
    params: &Parameters,
    batch: &[TimeSeriesSample],
    labels: &[usize],
    variant: &Variant,
) -> Result<f64> {
    let (logits, _) = forward(batch, params)?;
    let mut total = 0.0;
    for (z, &y) in logits.into_iter().zip(labels) {
        let z = LogitVector::new(z)?;
        let z = match &variant.prior {
            Some(prior) => dipa::adjust_logits(&z, prior, variant.tau)?,
            None => z,
        };
        total += dipa::loss_value(&z, y, variant.kind, variant.gamma)?;
    }
    Ok(total / batch.len() as f64)
}

fn analytic_gradients(
    params: &mut Parameters,
    batch: &[TimeSeriesSample],
    labels: &[usize],
    variant: &Variant,
) -> Result<()> {
    params.zero_grads();
    let (logits, cache) = forward(batch, params)?;
    let scale = 1.0 / batch.len() as f64;
    let mut grads = Vec::with_capacity(logits.len());
    for (z, &y) in logits.into_iter().zip(labels) {
        let z = LogitVector::new(z)?;
        let z = match &variant.prior {
            Some(prior) => dipa::adjust_logits(&z, prior, variant.tau)?,
            None => z,
        };
        let g = dipa::loss_gradient_wrt_logits(&z, y, variant.kind, variant.gamma)?;
        grads.push(g.into_iter().map(|v| v * scale).collect());
    }
    backward(params, &cache, &grads)
}

/// Run the audit and report the worst relative error per tensor and variant.
pub fn run(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    cfg.model.validate()?;
    let mut rng = Rng::with_stream(cfg.seed, 0xFD);

    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut labels = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size {
        let mut days = rng.sample_indices(cfg.model.max_len, cfg.seq_len);
        days.sort_unstable();
        let mut obs = Mat::zeros(cfg.seq_len, cfg.model.channels);
        for v in obs.as_mut_slice() {
            *v = 2.0 * rng.next_f64() - 1.0;
        }
        batch.push(TimeSeriesSample::new(days, obs, 0)?);
        labels.push(rng.next_below(cfg.model.num_classes));
    }

    let prior = sample_symmetric_dirichlet(0.5, cfg.model.num_classes, &mut rng)?;
    let variants = [
        Variant {
            label: "cross-entropy".into(),
            kind: LossKind::CrossEntropy,
            gamma: 0.0,
            prior: None,
            tau: 0.0,
        },
        Variant {
            label: "cross-entropy+prior".into(),
            kind: LossKind::CrossEntropy,
            gamma: 0.0,
            prior: Some(prior.clone()),
            tau: 1.0,
        },
        Variant {
            label: "focal(2)".into(),
            kind: LossKind::Focal,
            gamma: 2.0,
            prior: None,
            tau: 0.0,
        },
        Variant {
            label: "focal(2)+prior".into(),
            kind: LossKind::Focal,
            gamma: 2.0,
            prior: Some(prior),
            tau: 1.0,
        },
    ];

    let mut params = Parameters::init(&cfg.model, &mut rng)?;
    let tensor_names: Vec<String> = params.tensors().iter().map(|(n, _)| n.clone()).collect();

    let mut report = GradCheckReport {
        variants: Vec::new(),
        max_rel_err: 0.0,
        tolerance: cfg.tolerance,
    };

    for variant in &variants {
        analytic_gradients(&mut params, &batch, &labels, variant)?;
        let analytic: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|(_, t)| t.grad.as_slice().to_vec())
            .collect();

        let mut tensors = Vec::with_capacity(tensor_names.len());
        let mut variant_max = 0.0f64;
        for (idx, name) in tensor_names.iter().enumerate() {
            let len = analytic[idx].len();
            let n_checked = cfg.coords_per_tensor.min(len);
            let coords = if n_checked == len {
                (0..len).collect::<Vec<_>>()
            } else {
                rng.sample_indices(len, n_checked)
            };

            let mut max_rel = 0.0f64;
            for coord in coords {
                let original = {
                    let ts = params.tensors();
                    ts[idx].1.value.as_slice()[coord]
                };
                let set = |p: &mut Parameters, v: f64| {
                    let mut ts = p.tensors_mut();
                    ts[idx].1.value.as_mut_slice()[coord] = v;
                };
                set(&mut params, original + cfg.step);
                let plus = batch_loss(&params, &batch, &labels, variant)?;
                set(&mut params, original - cfg.step);
                let minus = batch_loss(&params, &batch, &labels, variant)?;
                set(&mut params, original);

                let numeric = (plus - minus) / (2.0 * cfg.step);
                let a = analytic[idx][coord];
                let denom = a.abs().max(numeric.abs());
                if denom > 1e-8 {
                    max_rel = max_rel.max(((a - numeric) / denom).abs());
                }
            }
            variant_max = variant_max.max(max_rel);
            tensors.push(TensorReport {
                tensor: name.clone(),
                checked: n_checked,
                max_rel_err: max_rel,
            });
        }
        report.max_rel_err = report.max_rel_err.max(variant_max);
        report.variants.push(VariantReport {
            label: variant.label.clone(),
            tensors,
            max_rel_err: variant_max,
        });
    }

    Ok(report)
}
