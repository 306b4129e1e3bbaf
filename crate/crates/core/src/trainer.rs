//! Mini-batch training with optional per-step prior augmentation, Adam
//! updates, patience-based early stopping, and the pretrain/fine-tune regime.
//!
//! One run is a pure function of its configuration: shuffling, prior draws,
//! and the fixed validation subsample live on separate seeded streams, so
//! toggling the augmentation cannot perturb batch order.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::TimeSeriesSample;
use crate::dipa::{self, DipaConfig, LogitVector, LossKind};
use crate::dirichlet::{sample_symmetric_dirichlet, SimplexVector};
use crate::error::{invalid, Result};
use crate::model::{backward, forward, Parameters};
use crate::rng::Rng;
use crate::tensor::Mat;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Seeds a full experiment repeats over by default.
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 42, 123, 1234];

const STREAM_SHUFFLE: u64 = 0x100;
const STREAM_PRIOR: u64 = 0x200;
const STREAM_VAL_SUBSAMPLE: u64 = 0x300;

const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss_kind: LossKind,
    pub focal_gamma: f64,
    pub dipa: DipaConfig,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop once validation loss has not improved for this many epochs.
    pub patience: usize,
    pub seed: u64,
    /// Fixed validation subset size per run; 0 evaluates the full set.
    pub validation_subsample: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_kind: LossKind::CrossEntropy,
            focal_gamma: 2.0,
            dipa: DipaConfig::disabled(),
            learning_rate: 1e-3,
            batch_size: 16,
            max_epochs: 200,
            patience: 15,
            seed: 0,
            validation_subsample: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(invalid("learning rate must be positive and finite"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(invalid("max_epochs must be at least 1"));
        }
        if self.patience == 0 {
            return Err(invalid("patience must be at least 1"));
        }
        if !(self.focal_gamma >= 0.0) || !self.focal_gamma.is_finite() {
            return Err(invalid("focal gamma must be non-negative and finite"));
        }
        self.dipa.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStopped,
    Diverged,
}

impl core::fmt::Display for StopReason {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            StopReason::MaxEpochs => write!(f, "max-epochs"),
            StopReason::EarlyStopped => write!(f, "early-stopped"),
            StopReason::Diverged => write!(f, "diverged"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// 1-based epoch index.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Per-run record: epoch curves, the restored best epoch, and why the run
/// ended. Early stopping watches validation loss; the best validation
/// accuracy is tracked alongside for model selection across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose parameters were restored (minimum val loss).
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best_val_accuracy: f64,
    /// 1-based epoch achieving the best validation accuracy.
    pub best_val_accuracy_epoch: usize,
    pub stop_reason: StopReason,
    pub diagnostic: Option<String>,
}

impl TrainTrace {
    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }

    pub fn diverged(&self) -> bool {
        self.stop_reason == StopReason::Diverged
    }
}

/// Adam first/second-moment state aligned with the canonical tensor order.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Mat>,
    v: Vec<Mat>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &Parameters) -> Self {
        let shapes: Vec<(usize, usize)> = params
            .tensors()
            .iter()
            .map(|(_, t)| (t.rows(), t.cols()))
            .collect();
        AdamState {
            m: shapes.iter().map(|&(r, c)| Mat::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Mat::zeros(r, c)).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update from the gradients accumulated in
/// `params`.
pub fn optimizer_step(
    params: &mut Parameters,
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<()> {
    if !(learning_rate > 0.0) || !learning_rate.is_finite() {
        return Err(invalid("learning rate must be positive and finite"));
    }
    let mut tensors = params.tensors_mut();
    if tensors.len() != state.m.len() {
        return Err(invalid("optimizer state does not match the parameters"));
    }
    state.step += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.step as i32);
    for (i, (_, t)) in tensors.iter_mut().enumerate() {
        if !t.value.same_shape(&state.m[i]) {
            return Err(invalid("optimizer state shape mismatch"));
        }
        let g = t.grad.as_slice();
        let m = state.m[i].as_mut_slice();
        let v = state.v[i].as_mut_slice();
        let w = t.value.as_mut_slice();
        for j in 0..g.len() {
            m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g[j];
            v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            w[j] -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        // The gradient buffer is consumed by the update.
        t.grad.fill(0.0);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalStats {
    pub loss: f64,
    pub accuracy: f64,
}

/// Mean loss and accuracy over `samples` with unadjusted logits.
pub fn evaluate(
    params: &Parameters,
    samples: &[TimeSeriesSample],
    kind: LossKind,
    gamma: f64,
) -> Result<EvalStats> {
    if samples.is_empty() {
        return Err(invalid("cannot evaluate an empty sample set"));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for chunk in samples.chunks(EVAL_CHUNK) {
        let (logits, _) = forward(chunk, params)?;
        for (z, sample) in logits.into_iter().zip(chunk) {
            let y = sample.label();
            let z = LogitVector::new(z)?;
            loss += dipa::loss_value(&z, y, kind, gamma)?;
            if argmax(z.values()) == y {
                correct += 1;
            }
        }
    }
    Ok(EvalStats {
        loss: loss / samples.len() as f64,
        accuracy: correct as f64 / samples.len() as f64,
    })
}

/// Index of the largest component (lowest index wins ties).
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Train with the built-in symmetric-Dirichlet prior sampler.
pub fn train(
    params: &mut Parameters,
    episode: &[TimeSeriesSample],
    val: &[TimeSeriesSample],
    cfg: &TrainConfig,
) -> Result<TrainTrace> {
    let alpha = cfg.dipa.alpha;
    train_with_prior(params, episode, val, cfg, |k, rng| {
        sample_symmetric_dirichlet(alpha, k, rng)
    })
}

/// Train with a caller-supplied pseudo-prior source (one draw per step).
/// The trainer consumes it only when the augmentation is enabled.
pub fn train_with_prior<F>(
    params: &mut Parameters,
    episode: &[TimeSeriesSample],
    val: &[TimeSeriesSample],
    cfg: &TrainConfig,
    mut sample_prior: F,
) -> Result<TrainTrace>
where
    F: FnMut(usize, &mut Rng) -> Result<SimplexVector>,
{
    cfg.validate()?;
    if episode.is_empty() {
        return Err(invalid("training episode is empty"));
    }
    if val.is_empty() {
        return Err(invalid("validation set is empty"));
    }
    let classes = params.config().num_classes;
    for s in episode.iter().chain(val) {
        if s.label() >= classes {
            return Err(invalid(format!(
                "label {} out of range for a {classes}-class head",
                s.label()
            )));
        }
    }

    let mut prior_rng = Rng::with_stream(cfg.seed, STREAM_PRIOR);
    let mut val_rng = Rng::with_stream(cfg.seed, STREAM_VAL_SUBSAMPLE);

    // The validation subsample is fixed once per run.
    let val_set: Vec<TimeSeriesSample> =
        if cfg.validation_subsample > 0 && val.len() > cfg.validation_subsample {
            val_rng
                .sample_indices(val.len(), cfg.validation_subsample)
                .into_iter()
                .map(|i| val[i].clone())
                .collect()
        } else {
            val.to_vec()
        };

    let mut state = AdamState::new(params);
    let mut trace = TrainTrace {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        best_val_accuracy: f64::NEG_INFINITY,
        best_val_accuracy_epoch: 0,
        stop_reason: StopReason::MaxEpochs,
        diagnostic: None,
    };
    let mut best_params: Option<Parameters> = None;
    let mut epochs_since_improvement = 0usize;

    let mut order: Vec<usize> = (0..episode.len()).collect();
    'epochs: for epoch in 1..=cfg.max_epochs {
        // Shuffling is reseeded per epoch from the run seed.
        let mut shuffle_rng = Rng::with_stream(cfg.seed, STREAM_SHUFFLE + epoch as u64);
        shuffle_rng.shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for step in order.chunks(cfg.batch_size) {
            let batch: Vec<TimeSeriesSample> =
                step.iter().map(|&i| episode[i].clone()).collect();

            // One pseudo-prior per optimization step, shared by the whole
            // mini-batch.
            let prior = if cfg.dipa.enabled {
                Some(sample_prior(classes, &mut prior_rng)?)
            } else {
                None
            };

            let (logits, cache) = forward(&batch, params)?;
            let scale = 1.0 / batch.len() as f64;
            let mut grads: Vec<Vec<f64>> = Vec::with_capacity(batch.len());
            let mut batch_loss = 0.0;
            for (z, sample) in logits.into_iter().zip(&batch) {
                if z.iter().any(|v| !v.is_finite()) {
                    trace.stop_reason = StopReason::Diverged;
                    trace.diagnostic =
                        Some(format!("non-finite logits at epoch {epoch}"));
                    break 'epochs;
                }
                let z = LogitVector::new(z)?;
                let z = match &prior {
                    Some(p) => dipa::adjust_logits(&z, p, cfg.dipa.tau)?,
                    None => z,
                };
                let y = sample.label();
                batch_loss += dipa::loss_value(&z, y, cfg.loss_kind, cfg.focal_gamma)?;
                let g = dipa::loss_gradient_wrt_logits(&z, y, cfg.loss_kind, cfg.focal_gamma)?;
                grads.push(g.into_iter().map(|v| v * scale).collect());
            }
            batch_loss *= scale;
            if !batch_loss.is_finite() {
                trace.stop_reason = StopReason::Diverged;
                trace.diagnostic = Some(format!("non-finite loss at epoch {epoch}"));
                break 'epochs;
            }
            loss_sum += batch_loss * batch.len() as f64;
            seen += batch.len();

            backward(params, &cache, &grads)?;
            optimizer_step(params, &mut state, cfg.learning_rate)?;
        }

        // Validation runs on raw logits: the augmentation is train-time only.
        let stats = evaluate(params, &val_set, cfg.loss_kind, cfg.focal_gamma)?;
        trace.epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_loss: stats.loss,
            val_accuracy: stats.accuracy,
        });

        if stats.accuracy > trace.best_val_accuracy {
            trace.best_val_accuracy = stats.accuracy;
            trace.best_val_accuracy_epoch = epoch;
        }
        if stats.loss < trace.best_val_loss {
            trace.best_val_loss = stats.loss;
            trace.best_epoch = epoch;
            best_params = Some(params.clone());
            epochs_since_improvement = 0;
        } else {
            epochs_since_improvement += 1;
            if epochs_since_improvement >= cfg.patience {
                trace.stop_reason = StopReason::EarlyStopped;
                break;
            }
        }
    }

    if let Some(best) = best_params {
        *params = best;
    }
    Ok(trace)
}

/// Full supervised training on a source domain, head reset to the target
/// class count, then training on the target episode. Backbone and head stay
/// trainable end-to-end in both phases.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_then_finetune(
    params: &mut Parameters,
    source_train: &[TimeSeriesSample],
    source_val: &[TimeSeriesSample],
    target_episode: &[TimeSeriesSample],
    target_val: &[TimeSeriesSample],
    pretrain_cfg: &TrainConfig,
    finetune_cfg: &TrainConfig,
    target_classes: usize,
    head_rng: &mut Rng,
) -> Result<(TrainTrace, TrainTrace)> {
    let channels = params.config().channels;
    for (name, set) in [
        ("source train", source_train),
        ("source val", source_val),
        ("target episode", target_episode),
        ("target val", target_val),
    ] {
        if let Some(s) = set.iter().find(|s| s.channels() != channels) {
            return Err(invalid(format!(
                "{name} has a sample with {} channels, model expects {channels}",
                s.channels()
            )));
        }
    }

    let pre_trace = train(params, source_train, source_val, pretrain_cfg)?;
    params.reset_head(target_classes, head_rng)?;
    let fine_trace = train(params, target_episode, target_val, finetune_cfg)?;
    Ok((pre_trace, fine_trace))
}
