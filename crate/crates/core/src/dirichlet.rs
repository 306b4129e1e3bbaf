//! Gamma and Dirichlet sampling plus the Dirichlet log-density.
//!
//! Draws are exact-distribution: gamma variates come from the
//! Marsaglia-Tsang squeeze method (with the `Gamma(a) = Gamma(a+1) · U^{1/a}`
//! boost for shapes below one) and a Dirichlet draw is the normalized vector
//! of independent `Gamma(α_c, 1)` variates.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec::Vec;

use crate::error::{domain, invalid, Result};
use crate::rng::Rng;
use crate::special::ln_gamma;

/// Smallest component a normalized simplex draw is allowed to carry.
///
/// Sampling with concentration below one routinely underflows a component to
/// exactly zero in finite precision; clamping here keeps `log π̃` finite for
/// the logit adjustment downstream.
pub const MIN_SIMPLEX_COMPONENT: f64 = 1e-12;

/// Absolute tolerance on the unit-sum invariant of [`SimplexVector`].
pub const SIMPLEX_SUM_TOL: f64 = 1e-12;

/// Concentration parameters `α = (α_1, …, α_K)` of a Dirichlet distribution,
/// `K ≥ 2`, all components strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationVector {
    values: Vec<f64>,
}

impl ConcentrationVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(invalid(format!(
                "concentration vector needs at least 2 components, got {}",
                values.len()
            )));
        }
        for (i, &a) in values.iter().enumerate() {
            if !(a > 0.0) || !a.is_finite() {
                return Err(invalid(format!(
                    "concentration component {i} must be positive and finite, got {a}"
                )));
            }
        }
        Ok(ConcentrationVector { values })
    }

    /// The symmetric form `α · 1` of length `k`.
    pub fn symmetric(alpha: f64, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(invalid(format!("need at least 2 classes, got {k}")));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(invalid(format!(
                "symmetric concentration must be positive and finite, got {alpha}"
            )));
        }
        Ok(ConcentrationVector {
            values: alloc::vec![alpha; k],
        })
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

    /// `α_0 = Σ_c α_c`.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// A probability vector on the simplex: strictly positive components that
/// sum to one within [`SIMPLEX_SUM_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector {
    values: Vec<f64>,
}

impl SimplexVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("simplex vector must be non-empty"));
        }
        for (i, &x) in values.iter().enumerate() {
            if !(x > 0.0) || !x.is_finite() {
                return Err(domain(format!(
                    "simplex component {i} must be strictly positive and finite, got {x}"
                )));
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
            return Err(domain(format!(
                "simplex components must sum to 1, got {sum}"
            )));
        }
        Ok(SimplexVector { values })
    }

    /// Normalize arbitrary positive mass into a valid simplex vector,
    /// clamping components up to [`MIN_SIMPLEX_COMPONENT`].
    pub fn from_positive_mass(mut mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(invalid("simplex vector must be non-empty"));
        }
        let sum: f64 = mass.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(domain(format!(
                "mass must be positive and finite to normalize, total {sum}"
            )));
        }
        for x in &mut mass {
            if !(*x >= 0.0) {
                return Err(domain("mass components must be non-negative"));
            }
            *x /= sum;
        }
        let mut clamped = false;
        for x in &mut mass {
            if *x < MIN_SIMPLEX_COMPONENT {
                *x = MIN_SIMPLEX_COMPONENT;
                clamped = true;
            }
        }
        if clamped {
            let total: f64 = mass.iter().sum();
            for x in &mut mass {
                *x /= total;
            }
        }
        Ok(SimplexVector { values: mass })
    }

    /// The uniform vector `(1/K, …, 1/K)`.
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("simplex vector must be non-empty"));
        }
        Ok(SimplexVector {
            values: alloc::vec![1.0 / k as f64; k],
        })
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

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }
}

/// One draw from `Gamma(shape, scale = 1)`.
pub fn sample_gamma(shape: f64, rng: &mut Rng) -> Result<f64> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(invalid(format!(
            "gamma shape must be positive and finite, got {shape}"
        )));
    }
    Ok(gamma_variate(shape, rng))
}

fn gamma_variate(shape: f64, rng: &mut Rng) -> f64 {
    if shape < 1.0 {
        // Boost: Gamma(a) = Gamma(a + 1) · U^{1/a}. The power can underflow
        // for very small shapes; keep the contract of strict positivity.
        let u = rng.next_f64_open();
        return (gamma_variate(shape + 1.0, rng) * u.powf(1.0 / shape))
            .max(f64::MIN_POSITIVE);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = rng.normal();
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = rng.next_f64_open();
        let x2 = x * x;
        // Squeeze test, then the exact acceptance check.
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// One draw from `Dir(α)` as normalized independent gamma variates.
pub fn sample_dirichlet(alpha: &ConcentrationVector, rng: &mut Rng) -> SimplexVector {
    let draws: Vec<f64> = alpha
        .values()
        .iter()
        .map(|&a| gamma_variate(a, rng))
        .collect();
    SimplexVector::from_positive_mass(draws)
        .expect("gamma variates are strictly positive")
}

/// One draw from the symmetric `Dir(α · 1)` over `k` classes.
pub fn sample_symmetric_dirichlet(alpha: f64, k: usize, rng: &mut Rng) -> Result<SimplexVector> {
    let conc = ConcentrationVector::symmetric(alpha, k)?;
    Ok(sample_dirichlet(&conc, rng))
}

/// `log p(x | α)` of the Dirichlet density at an interior simplex point:
/// `−log B(α) + Σ_c (α_c − 1) · log x_c`.
pub fn log_density(x: &SimplexVector, alpha: &ConcentrationVector) -> Result<f64> {
    if x.len() != alpha.len() {
        return Err(invalid(format!(
            "dimension mismatch: x has {}, alpha has {}",
            x.len(),
            alpha.len()
        )));
    }
    let mut log_p = ln_gamma(alpha.total());
    for (&xc, &ac) in x.values().iter().zip(alpha.values()) {
        if xc <= 0.0 {
            return Err(domain("log-density requires strictly positive components"));
        }
        log_p -= ln_gamma(ac);
        log_p += (ac - 1.0) * xc.ln();
    }
    Ok(log_p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_and_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        (mean, var)
    }

    #[test]
    fn gamma_rejects_bad_shape() {
        let mut rng = Rng::new(0);
        assert!(sample_gamma(0.0, &mut rng).is_err());
        assert!(sample_gamma(-1.0, &mut rng).is_err());
        assert!(sample_gamma(f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn gamma_shape_one_is_exponential() {
        let mut rng = Rng::new(1);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| sample_gamma(1.0, &mut rng).unwrap())
            .collect();
        let (mean, _) = mean_and_var(&draws);
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn gamma_shape_five_moments() {
        let mut rng = Rng::new(2);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| sample_gamma(5.0, &mut rng).unwrap())
            .collect();
        let (mean, var) = mean_and_var(&draws);
        assert!((mean - 5.0).abs() < 0.05, "mean {mean}");
        assert!((var - 5.0).abs() < 0.25, "var {var}");
    }

    #[test]
    fn gamma_small_shape_mean() {
        let mut rng = Rng::new(3);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| sample_gamma(0.3, &mut rng).unwrap())
            .collect();
        let (mean, _) = mean_and_var(&draws);
        assert!((mean - 0.3).abs() < 0.02, "mean {mean}");
        assert!(draws.iter().all(|&x| x > 0.0));
    }

    /// Independent distributional oracle: compare sampler quantiles against
    /// the inverse CDF computed from the regularized lower incomplete gamma
    /// function (series + continued-fraction evaluation, bisection inversion).
    mod inverse_cdf_oracle {
        use crate::special::ln_gamma;

        /// Regularized lower incomplete gamma P(a, x).
        pub fn gamma_p(a: f64, x: f64) -> f64 {
            if x <= 0.0 {
                return 0.0;
            }
            if x < a + 1.0 {
                // Series representation.
                let mut term = 1.0 / a;
                let mut sum = term;
                let mut n = a;
                for _ in 0..500 {
                    n += 1.0;
                    term *= x / n;
                    sum += term;
                    if term.abs() < sum.abs() * 1e-15 {
                        break;
                    }
                }
                sum * (-x + a * x.ln() - ln_gamma(a)).exp()
            } else {
                // Continued fraction for Q(a, x) (modified Lentz).
                let tiny = 1e-300;
                let mut b = x + 1.0 - a;
                let mut c = 1.0 / tiny;
                let mut d = 1.0 / b;
                let mut h = d;
                for i in 1..500 {
                    let an = -(i as f64) * (i as f64 - a);
                    b += 2.0;
                    d = an * d + b;
                    if d.abs() < tiny {
                        d = tiny;
                    }
                    c = b + an / c;
                    if c.abs() < tiny {
                        c = tiny;
                    }
                    d = 1.0 / d;
                    let delta = d * c;
                    h *= delta;
                    if (delta - 1.0).abs() < 1e-15 {
                        break;
                    }
                }
                let q = (-x + a * x.ln() - ln_gamma(a)).exp() * h;
                1.0 - q
            }
        }

        /// Inverse of P(a, ·) by bisection.
        pub fn gamma_quantile(a: f64, p: f64) -> f64 {
            let (mut lo, mut hi) = (0.0, 1.0);
            while gamma_p(a, hi) < p {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if gamma_p(a, mid) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    }

    #[test]
    fn gamma_quantiles_match_inverse_cdf_oracle() {
        use inverse_cdf_oracle::gamma_quantile;
        for &shape in &[0.3, 1.0, 5.0] {
            let mut rng = Rng::new(17);
            let n = 100_000;
            let mut draws: Vec<f64> = (0..n)
                .map(|_| sample_gamma(shape, &mut rng).unwrap())
                .collect();
            draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for &q in &[0.1, 0.25, 0.5, 0.75, 0.9] {
                let empirical = draws[(q * n as f64) as usize];
                let expected = gamma_quantile(shape, q);
                let rel = (empirical - expected).abs() / expected.max(1e-6);
                assert!(
                    rel < 0.03,
                    "shape {shape} quantile {q}: sampler {empirical} vs oracle {expected}"
                );
            }
        }
    }

    #[test]
    fn dirichlet_draw_is_valid_simplex() {
        let mut rng = Rng::new(4);
        let alpha = ConcentrationVector::new(alloc::vec![0.4, 2.0, 7.5]).unwrap();
        for _ in 0..1000 {
            let x = sample_dirichlet(&alpha, &mut rng);
            let sum: f64 = x.values().iter().sum();
            assert!((sum - 1.0).abs() <= SIMPLEX_SUM_TOL);
            assert!(x.values().iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn symmetric_dirichlet_component_means() {
        let mut rng = Rng::new(5);
        let n = 200_000;
        let k = 3;
        let mut sums = [0.0f64; 3];
        for _ in 0..n {
            let x = sample_symmetric_dirichlet(5.0, k, &mut rng).unwrap();
            for (s, &v) in sums.iter_mut().zip(x.values()) {
                *s += v;
            }
        }
        for s in sums {
            assert!((s / n as f64 - 1.0 / 3.0).abs() < 0.005);
        }
    }

    #[test]
    fn symmetric_dirichlet_k4_alpha1_means() {
        let mut rng = Rng::new(6);
        let n = 200_000;
        let mut sums = [0.0f64; 4];
        for _ in 0..n {
            let x = sample_symmetric_dirichlet(1.0, 4, &mut rng).unwrap();
            for (s, &v) in sums.iter_mut().zip(x.values()) {
                *s += v;
            }
        }
        for s in sums {
            assert!((s / n as f64 - 0.25).abs() < 0.005);
        }
    }

    #[test]
    fn huge_concentration_pins_the_center() {
        let mut rng = Rng::new(7);
        for _ in 0..200 {
            let x = sample_symmetric_dirichlet(1e6, 3, &mut rng).unwrap();
            for &v in x.values() {
                assert!((v - 1.0 / 3.0).abs() < 0.01);
            }
        }
    }

    #[test]
    fn symmetric_variance_matches_analytic_form() {
        // Var = (K − 1) / (K² (Kα + 1)) for the symmetric Dirichlet.
        let (alpha, k) = (5.0, 5);
        let expected = (k as f64 - 1.0) / ((k * k) as f64 * (k as f64 * alpha + 1.0));
        let mut rng = Rng::new(8);
        let n = 200_000;
        let mut first: Vec<f64> = Vec::with_capacity(n);
        for _ in 0..n {
            let x = sample_symmetric_dirichlet(alpha, k, &mut rng).unwrap();
            first.push(x.get(0));
        }
        let (_, var) = mean_and_var(&first);
        assert!(
            (var - expected).abs() / expected < 0.05,
            "var {var} vs {expected}"
        );
    }

    #[test]
    fn low_alpha_concentrates_in_corners() {
        let frac_above = |alpha: f64, seed: u64| {
            let mut rng = Rng::new(seed);
            let n = 100_000;
            let mut hits = 0usize;
            for _ in 0..n {
                let x = sample_symmetric_dirichlet(alpha, 3, &mut rng).unwrap();
                let max = x.values().iter().cloned().fold(0.0, f64::max);
                if max > 0.9 {
                    hits += 1;
                }
            }
            hits as f64 / n as f64
        };
        let skewed = frac_above(0.3, 9);
        let flat = frac_above(30.0, 10);
        assert!(
            skewed > flat,
            "corner mass {skewed} should exceed {flat}"
        );
        assert!(skewed > 0.1);
    }

    #[test]
    fn determinism_bitwise() {
        let mut a = Rng::new(123);
        let mut b = Rng::new(123);
        for _ in 0..200 {
            let x = sample_symmetric_dirichlet(0.7, 6, &mut a).unwrap();
            let y = sample_symmetric_dirichlet(0.7, 6, &mut b).unwrap();
            for (u, v) in x.values().iter().zip(y.values()) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn log_density_uniform_cases() {
        // α = 1 makes the density constant: Γ(K) on the (K−1)-simplex.
        let a3 = ConcentrationVector::symmetric(1.0, 3).unwrap();
        let x = SimplexVector::new(alloc::vec![0.2, 0.3, 0.5]).unwrap();
        assert!((log_density(&x, &a3).unwrap() - 2.0f64.ln()).abs() < 1e-12);

        let a2 = ConcentrationVector::symmetric(1.0, 2).unwrap();
        let x = SimplexVector::new(alloc::vec![0.25, 0.75]).unwrap();
        assert!(log_density(&x, &a2).unwrap().abs() < 1e-12);
    }

    #[test]
    fn log_density_half_concentration_center() {
        // α = 0.5·1, x at the barycenter of the 2-simplex:
        // −log(2π) + 1.5·log 3.
        let alpha = ConcentrationVector::symmetric(0.5, 3).unwrap();
        let third = 1.0 / 3.0;
        let x = SimplexVector::new(alloc::vec![third, third, third]).unwrap();
        let expected = -(2.0 * core::f64::consts::PI).ln() + 1.5 * 3.0f64.ln();
        let got = log_density(&x, &alpha).unwrap();
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
        assert!((got - (-0.18996)).abs() < 1e-5);
    }

    #[test]
    fn log_density_errors() {
        let alpha = ConcentrationVector::symmetric(1.0, 3).unwrap();
        let x2 = SimplexVector::new(alloc::vec![0.5, 0.5]).unwrap();
        assert!(log_density(&x2, &alpha).is_err());
    }

    #[test]
    fn concentration_validation() {
        assert!(ConcentrationVector::new(alloc::vec![1.0]).is_err());
        assert!(ConcentrationVector::new(alloc::vec![1.0, 0.0]).is_err());
        assert!(ConcentrationVector::new(alloc::vec![1.0, -2.0]).is_err());
        assert!(ConcentrationVector::symmetric(1.0, 1).is_err());
        assert!(ConcentrationVector::symmetric(0.0, 3).is_err());
    }
}
