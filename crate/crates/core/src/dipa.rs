//! Pseudo-prior logit adjustment and the losses computed on top of it.
//!
//! A training step samples one pseudo-prior `π̃` per mini-batch, shifts every
//! sample's logits by `τ · log π̃`, and evaluates cross-entropy or focal loss
//! on the shifted logits. Losses and gradients are computed in log-space via
//! log-sum-exp; probabilities are never materialized on the loss path, so
//! skewed priors and large `τ` stay numerically safe.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec::Vec;

use crate::dirichlet::SimplexVector;
use crate::error::{domain, invalid, Result};

/// Raw class scores `z ∈ R^K`; all components finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector {
    values: Vec<f64>,
}

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("logit vector must be non-empty"));
        }
        if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(domain(format!("logit component {i} is not finite: {v}")));
        }
        Ok(LogitVector { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Configuration of the prior augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipaConfig {
    /// Symmetric Dirichlet concentration; below one samples skewed priors,
    /// above one samples near-uniform ones.
    pub alpha: f64,
    /// Scale of the additive `log π̃` adjustment.
    pub tau: f64,
    pub enabled: bool,
}

impl DipaConfig {
    pub fn disabled() -> Self {
        DipaConfig {
            alpha: 1.0,
            tau: 1.0,
            enabled: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(invalid(format!(
                "dipa alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(invalid(format!(
                "dipa tau must be non-negative and finite, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Which loss a training run optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    Focal,
}

/// Numerically stable softmax (max-shifted). The output is clamped onto the
/// strict interior of the simplex, matching the sampler's convention.
pub fn softmax(z: &LogitVector) -> SimplexVector {
    let m = z.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.values().iter().map(|&v| (v - m).exp()).collect();
    SimplexVector::from_positive_mass(exps).expect("shifted exponentials have positive total mass")
}

/// Log-softmax: `z_c − m − log Σ_j exp(z_j − m)`.
pub fn log_softmax(z: &LogitVector) -> Vec<f64> {
    let m = z.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = z
        .values()
        .iter()
        .map(|&v| (v - m).exp())
        .sum::<f64>()
        .ln()
        + m;
    z.values().iter().map(|&v| v - lse).collect()
}

/// Shift logits by a scaled log-prior: `z'_c = z_c + τ · log π̃_c`.
pub fn adjust_logits(z: &LogitVector, prior: &SimplexVector, tau: f64) -> Result<LogitVector> {
    if z.len() != prior.len() {
        return Err(invalid(format!(
            "dimension mismatch: logits {}, prior {}",
            z.len(),
            prior.len()
        )));
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(invalid(format!(
            "tau must be non-negative and finite, got {tau}"
        )));
    }
    let values = z
        .values()
        .iter()
        .zip(prior.values())
        .map(|(&zc, &pc)| zc + tau * pc.ln())
        .collect();
    LogitVector::new(values)
}

fn check_label(k: usize, y: usize) -> Result<()> {
    if y >= k {
        return Err(invalid(format!(
            "class index {y} out of range for {k} classes"
        )));
    }
    Ok(())
}

/// Cross-entropy `−log p̂_y` of the predictive distribution implied by the
/// (possibly adjusted) logits, evaluated in log-space.
pub fn cross_entropy(z: &LogitVector, y: usize) -> Result<f64> {
    check_label(z.len(), y)?;
    Ok(-log_softmax(z)[y])
}

/// Focal loss `(1 − p̂_y)^γ · (−log p̂_y)` without a class-balancing factor.
/// `gamma = 0` reduces exactly to cross-entropy.
pub fn focal_loss(z: &LogitVector, y: usize, gamma: f64) -> Result<f64> {
    check_label(z.len(), y)?;
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(invalid(format!(
            "focal gamma must be non-negative and finite, got {gamma}"
        )));
    }
    let log_p = log_softmax(z)[y];
    let p = log_p.exp();
    Ok((1.0 - p).powf(gamma) * -log_p)
}

/// Loss value for the configured kind; `gamma` is ignored for cross-entropy.
pub fn loss_value(z: &LogitVector, y: usize, kind: LossKind, gamma: f64) -> Result<f64> {
    match kind {
        LossKind::CrossEntropy => cross_entropy(z, y),
        LossKind::Focal => focal_loss(z, y, gamma),
    }
}

/// Analytic gradient of the loss with respect to the logits it was computed
/// on. An additive prior adjustment is constant in `z`, so this is also the
/// gradient with respect to the base logits.
pub fn loss_gradient_wrt_logits(
    z_adjusted: &LogitVector,
    y: usize,
    kind: LossKind,
    gamma: f64,
) -> Result<Vec<f64>> {
    check_label(z_adjusted.len(), y)?;
    let log_p = log_softmax(z_adjusted);
    let probs: Vec<f64> = log_p.iter().map(|&lp| lp.exp()).collect();
    match kind {
        LossKind::CrossEntropy => Ok(ce_gradient(&probs, y)),
        LossKind::Focal => {
            if !(gamma >= 0.0) || !gamma.is_finite() {
                return Err(invalid(format!(
                    "focal gamma must be non-negative and finite, got {gamma}"
                )));
            }
            if gamma == 0.0 {
                return Ok(ce_gradient(&probs, y));
            }
            let p_y = probs[y];
            let log_p_y = log_p[y];
            let omp = 1.0 - p_y;
            // d/dz_c [(1−p_y)^γ (−log p_y)] = coef · (1[c=y] − p_c) with
            // coef = γ (1−p_y)^{γ−1} p_y log p_y − (1−p_y)^γ. The limit of
            // coef as p_y → 1 is 0 for every γ > 0.
            let coef = if omp <= 0.0 {
                0.0
            } else {
                gamma * omp.powf(gamma - 1.0) * p_y * log_p_y - omp.powf(gamma)
            };
            Ok(probs
                .iter()
                .enumerate()
                .map(|(c, &pc)| {
                    let indicator = if c == y { 1.0 } else { 0.0 };
                    coef * (indicator - pc)
                })
                .collect())
        }
    }
}

fn ce_gradient(probs: &[f64], y: usize) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(c, &pc)| if c == y { pc - 1.0 } else { pc })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use alloc::vec;

    fn logits(v: &[f64]) -> LogitVector {
        LogitVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn softmax_symmetric() {
        let p = softmax(&logits(&[0.0, 0.0, 0.0]));
        for &v in p.values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_recovers_log_probabilities() {
        let p = softmax(&logits(&[0.9f64.ln(), 0.1f64.ln()]));
        assert!((p.get(0) - 0.9).abs() < 1e-12);
        assert!((p.get(1) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn softmax_extreme_logits_do_not_overflow() {
        let p = softmax(&logits(&[1000.0, 0.0]));
        assert!(p.get(0) > 1.0 - 1e-9);
        assert!(p.get(1) > 0.0);
        assert!(p.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn non_finite_logits_rejected() {
        assert!(LogitVector::new(vec![f64::NAN, 0.0]).is_err());
        assert!(LogitVector::new(vec![f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn adjust_tau_zero_is_identity() {
        let z = logits(&[0.3, -1.2, 2.0]);
        let prior = SimplexVector::new(vec![0.6, 0.3, 0.1]).unwrap();
        let z2 = adjust_logits(&z, &prior, 0.0).unwrap();
        assert_eq!(z.values(), z2.values());
    }

    #[test]
    fn adjust_uniform_prior_preserves_predictive() {
        let z = logits(&[0.4, -0.7, 1.3, 0.0]);
        let prior = SimplexVector::uniform(4).unwrap();
        for &tau in &[0.5, 1.0, 3.0] {
            let z2 = adjust_logits(&z, &prior, tau).unwrap();
            let p = softmax(&z);
            let p2 = softmax(&z2);
            for (a, b) in p.values().iter().zip(p2.values()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn adjust_flat_logits_recover_prior() {
        let z = logits(&[0.0, 0.0]);
        let prior = SimplexVector::new(vec![0.9, 0.1]).unwrap();
        let p = softmax(&adjust_logits(&z, &prior, 1.0).unwrap());
        assert!((p.get(0) - 0.9).abs() < 1e-12);
        assert!((p.get(1) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn adjust_tau_additivity() {
        let z = logits(&[0.2, 1.4, -0.6]);
        let prior = SimplexVector::new(vec![0.5, 0.2, 0.3]).unwrap();
        let a = adjust_logits(&adjust_logits(&z, &prior, 0.7).unwrap(), &prior, 1.1).unwrap();
        let b = adjust_logits(&z, &prior, 1.8).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn increasing_tau_suppresses_low_prior_classes() {
        let z = logits(&[0.0, 0.0, 0.0]);
        let prior = SimplexVector::new(vec![0.7, 0.2, 0.1]).unwrap();
        let mut prev: Option<Vec<f64>> = None;
        for step in 0..5 {
            let tau = step as f64 * 0.5;
            let p = softmax(&adjust_logits(&z, &prior, tau).unwrap());
            if let Some(prev) = prev {
                // Classes 1 and 2 are below the prior max; their mass must
                // strictly shrink as tau grows.
                assert!(p.get(1) < prev[1]);
                assert!(p.get(2) < prev[2]);
            }
            prev = Some(p.values().to_vec());
        }
    }

    #[test]
    fn cross_entropy_values() {
        // p̂_y = 1 (overwhelming logit margin) → ~0.
        let z = logits(&[60.0, 0.0]);
        assert!(cross_entropy(&z, 0).unwrap() < 1e-12);
        // p̂_y = 0.8.
        let z = logits(&[0.8f64.ln(), 0.2f64.ln()]);
        assert!((cross_entropy(&z, 0).unwrap() - 0.22314355131420976).abs() < 1e-12);
        // Uniform over four classes → ln 4.
        let z = logits(&[0.0, 0.0, 0.0, 0.0]);
        for y in 0..4 {
            assert!((cross_entropy(&z, y).unwrap() - 4.0f64.ln()).abs() < 1e-12);
        }
        assert!(cross_entropy(&z, 4).is_err());
    }

    #[test]
    fn focal_matches_formula() {
        // gamma = 2, p̂_y = 0.5 → 0.25 · ln 2.
        let z = logits(&[0.5f64.ln(), 0.5f64.ln()]);
        let want = 0.25 * 2.0f64.ln();
        assert!((focal_loss(&z, 0, 2.0).unwrap() - want).abs() < 1e-12);
        // Well-classified samples are crushed by the (1 − p)² factor.
        let z = logits(&[0.999f64.ln(), 0.001f64.ln()]);
        let fl = focal_loss(&z, 0, 2.0).unwrap();
        assert!(fl < 1e-8 && fl > 0.0, "focal {fl}");
        assert!(focal_loss(&z, 0, -1.0).is_err());
    }

    #[test]
    fn focal_gamma_zero_equals_cross_entropy() {
        let mut rng = Rng::new(40);
        for _ in 0..500 {
            let k = 2 + rng.next_below(6);
            let v: Vec<f64> = (0..k).map(|_| 4.0 * rng.next_f64() - 2.0).collect();
            let z = LogitVector::new(v).unwrap();
            let y = rng.next_below(k);
            let ce = cross_entropy(&z, y).unwrap();
            let fl = focal_loss(&z, y, 0.0).unwrap();
            assert!((ce - fl).abs() <= 1e-12);
        }
    }

    #[test]
    fn ce_gradient_flat_two_class() {
        let z = logits(&[0.0, 0.0]);
        let g = loss_gradient_wrt_logits(&z, 0, LossKind::CrossEntropy, 0.0).unwrap();
        assert!((g[0] + 0.5).abs() < 1e-15);
        assert!((g[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn focal_gradient_gamma_zero_equals_ce_gradient() {
        let mut rng = Rng::new(41);
        for _ in 0..200 {
            let v: Vec<f64> = (0..5).map(|_| 3.0 * rng.next_f64() - 1.5).collect();
            let z = LogitVector::new(v).unwrap();
            let y = rng.next_below(5);
            let ce = loss_gradient_wrt_logits(&z, y, LossKind::CrossEntropy, 0.0).unwrap();
            let fl = loss_gradient_wrt_logits(&z, y, LossKind::Focal, 0.0).unwrap();
            for (a, b) in ce.iter().zip(&fl) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    fn finite_difference_gradient(
        z: &LogitVector,
        y: usize,
        kind: LossKind,
        gamma: f64,
    ) -> Vec<f64> {
        let h = 1e-5;
        (0..z.len())
            .map(|c| {
                let mut plus = z.values().to_vec();
                let mut minus = z.values().to_vec();
                plus[c] += h;
                minus[c] -= h;
                let lp = loss_value(&LogitVector::new(plus).unwrap(), y, kind, gamma).unwrap();
                let lm = loss_value(&LogitVector::new(minus).unwrap(), y, kind, gamma).unwrap();
                (lp - lm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::new(42);
        for kind in [LossKind::CrossEntropy, LossKind::Focal] {
            for _ in 0..50 {
                let v: Vec<f64> = (0..5).map(|_| 4.0 * rng.next_f64() - 2.0).collect();
                let z = LogitVector::new(v).unwrap();
                let y = rng.next_below(5);
                let analytic = loss_gradient_wrt_logits(&z, y, kind, 2.0).unwrap();
                let numeric = finite_difference_gradient(&z, y, kind, 2.0);
                for (a, n) in analytic.iter().zip(&numeric) {
                    let scale = a.abs().max(n.abs());
                    if scale > 1e-8 {
                        assert!(
                            ((a - n) / scale).abs() <= 1e-6,
                            "{kind:?}: analytic {a} vs numeric {n}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn uniform_prior_identity_for_losses_and_gradients() {
        let mut rng = Rng::new(43);
        for _ in 0..100 {
            let v: Vec<f64> = (0..6).map(|_| 4.0 * rng.next_f64() - 2.0).collect();
            let z = LogitVector::new(v).unwrap();
            let y = rng.next_below(6);
            let uniform = SimplexVector::uniform(6).unwrap();
            let z2 = adjust_logits(&z, &uniform, 2.5).unwrap();
            for (kind, gamma) in [(LossKind::CrossEntropy, 0.0), (LossKind::Focal, 2.0)] {
                let l1 = loss_value(&z, y, kind, gamma).unwrap();
                let l2 = loss_value(&z2, y, kind, gamma).unwrap();
                assert!((l1 - l2).abs() <= 1e-12);
                let g1 = loss_gradient_wrt_logits(&z, y, kind, gamma).unwrap();
                let g2 = loss_gradient_wrt_logits(&z2, y, kind, gamma).unwrap();
                for (a, b) in g1.iter().zip(&g2) {
                    assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }
}
