//! Synthetic long-tailed time-series data: generation, splitting with
//! held-out zero-shot classes, and k-shot episode sampling.
//!
//! Each class carries a smooth seasonal prototype per channel (a sum of two
//! sinusoids over the year with class-specific amplitude and phase); a sample
//! observes the prototype at a handful of random days plus Gaussian noise.
//! One head class absorbs a configurable fraction of the label mass and the
//! remainder decays as a power law, so a random split leaves some tail
//! classes with a single sample or none at all.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::rng::Rng;
use crate::tensor::Mat;

const TAU: f64 = 2.0 * core::f64::consts::PI;
/// Calendar positions run over a full year including a leap day.
pub const DAYS_PER_YEAR: usize = 366;

const STREAM_PROTOTYPES: u64 = 0x70;
const STREAM_SAMPLES: u64 = 0x71;

/// One labeled series: observations at non-decreasing day-of-year positions.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesSample {
    days: Vec<usize>,
    observations: Mat,
    label: usize,
}

impl TimeSeriesSample {
    pub fn new(days: Vec<usize>, observations: Mat, label: usize) -> Result<Self> {
        if days.is_empty() {
            return Err(invalid("a sample needs at least one observation"));
        }
        if days.len() != observations.rows() {
            return Err(invalid(format!(
                "{} day positions but {} observation rows",
                days.len(),
                observations.rows()
            )));
        }
        if observations.cols() == 0 {
            return Err(invalid("a sample needs at least one channel"));
        }
        for pair in days.windows(2) {
            if pair[1] < pair[0] {
                return Err(invalid("day positions must be sorted"));
            }
        }
        if *days.last().unwrap() >= DAYS_PER_YEAR {
            return Err(invalid(format!(
                "day positions must lie in [0, {DAYS_PER_YEAR})"
            )));
        }
        Ok(TimeSeriesSample {
            days,
            observations,
            label,
        })
    }

    pub fn n_t(&self) -> usize {
        self.days.len()
    }

    pub fn channels(&self) -> usize {
        self.observations.cols()
    }

    pub fn days(&self) -> &[usize] {
        &self.days
    }

    pub fn observations(&self) -> &Mat {
        &self.observations
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn with_label(&self, label: usize) -> TimeSeriesSample {
        TimeSeriesSample {
            days: self.days.clone(),
            observations: self.observations.clone(),
            label,
        }
    }
}

/// Shape of the synthetic benchmark source.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub num_classes: usize,
    /// Label mass of the single dominant class.
    pub head_class_fraction: f64,
    /// Power-law decay of the remaining class frequencies.
    pub tail_exponent: f64,
    pub channels: usize,
    /// Inclusive bounds on observations per sample.
    pub obs_count_range: (usize, usize),
    pub noise_scale: f64,
    /// How many tail classes the splitter will force entirely into test.
    pub test_only_classes: usize,
    pub total_samples: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_classes: 12,
            head_class_fraction: 0.46,
            tail_exponent: 1.0,
            channels: 13,
            obs_count_range: (8, 16),
            noise_scale: 1.2,
            test_only_classes: 2,
            total_samples: 15_000,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(invalid("need at least 2 classes"));
        }
        if !(self.head_class_fraction > 0.0 && self.head_class_fraction < 1.0) {
            return Err(invalid(format!(
                "head_class_fraction must lie in (0, 1), got {}",
                self.head_class_fraction
            )));
        }
        if !(self.tail_exponent > 0.0) {
            return Err(invalid("tail_exponent must be positive"));
        }
        if self.channels == 0 {
            return Err(invalid("need at least one channel"));
        }
        let (lo, hi) = self.obs_count_range;
        if lo == 0 || lo > hi || hi > DAYS_PER_YEAR {
            return Err(invalid(format!(
                "obs_count_range ({lo}, {hi}) must satisfy 1 <= lo <= hi <= {DAYS_PER_YEAR}"
            )));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(invalid("noise_scale must be non-negative"));
        }
        if self.test_only_classes >= self.num_classes {
            return Err(invalid(format!(
                "test_only_classes {} must be below num_classes {}",
                self.test_only_classes, self.num_classes
            )));
        }
        if self.total_samples < self.num_classes {
            return Err(invalid(format!(
                "total_samples {} cannot cover {} classes",
                self.total_samples, self.num_classes
            )));
        }
        Ok(())
    }

    /// Label distribution: head class first, power-law tail after.
    pub fn class_probabilities(&self) -> Vec<f64> {
        let mut probs = vec![0.0; self.num_classes];
        probs[0] = self.head_class_fraction;
        let tail_mass = 1.0 - self.head_class_fraction;
        let weights: Vec<f64> = (1..self.num_classes)
            .map(|rank| (rank as f64).powf(-self.tail_exponent))
            .collect();
        let total: f64 = weights.iter().sum();
        for (p, w) in probs[1..].iter_mut().zip(&weights) {
            *p = tail_mass * w / total;
        }
        probs
    }
}

/// A fully labeled synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<TimeSeriesSample>,
    pub num_classes: usize,
    pub channels: usize,
}

/// Per-channel seasonal prototype of one class.
#[derive(Debug, Clone)]
struct ClassPrototype {
    /// (offset, amp1, phase1, amp2, phase2) per channel.
    channels: Vec<(f64, f64, f64, f64, f64)>,
}

impl ClassPrototype {
    fn draw(channels: usize, rng: &mut Rng) -> Self {
        let channels = (0..channels)
            .map(|_| {
                let offset = rng.next_f64() - 0.5;
                let amp1 = 0.4 + 0.8 * rng.next_f64();
                let phase1 = TAU * rng.next_f64();
                let amp2 = 0.2 + 0.6 * rng.next_f64();
                let phase2 = TAU * rng.next_f64();
                (offset, amp1, phase1, amp2, phase2)
            })
            .collect();
        ClassPrototype { channels }
    }

    fn value(&self, day: usize, channel: usize) -> f64 {
        let (offset, a1, p1, a2, p2) = self.channels[channel];
        let t = day as f64 / DAYS_PER_YEAR as f64;
        offset + a1 * (TAU * t + p1).sin() + a2 * (2.0 * TAU * t + p2).sin()
    }
}

/// Generate the full labeled dataset described by `cfg`. Labels are drawn
/// i.i.d. from the configured long-tailed distribution, so empirical counts
/// carry multinomial sampling error.
pub fn generate(cfg: &GeneratorConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut proto_rng = Rng::with_stream(cfg.seed, STREAM_PROTOTYPES);
    let prototypes: Vec<ClassPrototype> = (0..cfg.num_classes)
        .map(|_| ClassPrototype::draw(cfg.channels, &mut proto_rng))
        .collect();

    let probs = cfg.class_probabilities();
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in &probs {
        acc += p;
        cumulative.push(acc);
    }

    let mut rng = Rng::with_stream(cfg.seed, STREAM_SAMPLES);
    let (lo, hi) = cfg.obs_count_range;
    let mut samples = Vec::with_capacity(cfg.total_samples);
    for _ in 0..cfg.total_samples {
        let u = rng.next_f64();
        let label = cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(cfg.num_classes - 1);

        let n_t = lo + rng.next_below(hi - lo + 1);
        let mut days = rng.sample_indices(DAYS_PER_YEAR, n_t);
        days.sort_unstable();

        let mut obs = Mat::zeros(n_t, cfg.channels);
        for (t, &day) in days.iter().enumerate() {
            let row = obs.row_mut(t);
            for (ch, slot) in row.iter_mut().enumerate() {
                let mut v = prototypes[label].value(day, ch);
                if cfg.noise_scale > 0.0 {
                    v += cfg.noise_scale * rng.normal();
                }
                *slot = v;
            }
        }
        samples.push(TimeSeriesSample::new(days, obs, label)?);
    }

    Ok(Dataset {
        samples,
        num_classes: cfg.num_classes,
        channels: cfg.channels,
    })
}

/// Train/validation/test partition. Classes listed in `test_only_classes`
/// appear exclusively in the test split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<TimeSeriesSample>,
    pub validation: Vec<TimeSeriesSample>,
    pub test: Vec<TimeSeriesSample>,
    pub test_only_classes: Vec<usize>,
    pub num_classes: usize,
    pub channels: usize,
}

/// Per-class sample counts over a slice of samples.
pub fn class_counts(samples: &[TimeSeriesSample], num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; num_classes];
    for s in samples {
        if s.label() < num_classes {
            counts[s.label()] += 1;
        }
    }
    counts
}

/// Randomly partition `dataset` into train/validation/test with the given
/// fractions of the total, forcing the `test_only` rarest populated classes
/// entirely into the test split.
pub fn split(
    dataset: Dataset,
    fractions: (f64, f64, f64),
    test_only: usize,
    rng: &mut Rng,
) -> Result<SplitDataset> {
    let (f_train, f_val, f_test) = fractions;
    if !(f_train > 0.0 && f_val > 0.0 && f_test > 0.0) {
        return Err(invalid("split fractions must be positive"));
    }
    if (f_train + f_val + f_test - 1.0).abs() > 1e-9 {
        return Err(invalid("split fractions must sum to 1"));
    }
    if test_only >= dataset.num_classes {
        return Err(invalid(format!(
            "test_only {test_only} must be below num_classes {}",
            dataset.num_classes
        )));
    }

    // Rarest populated classes become test-only; ties break toward the
    // higher class index, which carries the lower configured frequency.
    let counts = class_counts(&dataset.samples, dataset.num_classes);
    let mut candidates: Vec<usize> = (0..dataset.num_classes)
        .filter(|&c| counts[c] > 0)
        .collect();
    candidates.sort_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)));
    if candidates.len() <= test_only {
        return Err(invalid("not enough populated classes to hold out"));
    }
    let mut held: Vec<usize> = candidates.into_iter().take(test_only).collect();
    held.sort_unstable();

    let n = dataset.samples.len();
    let target_train = (f_train * n as f64).round() as usize;
    let target_test = (f_test * n as f64).round() as usize;

    let is_held = |label: usize| held.binary_search(&label).is_ok();
    let mut test: Vec<TimeSeriesSample> = Vec::new();
    let mut rest: Vec<TimeSeriesSample> = Vec::new();
    for s in dataset.samples {
        if is_held(s.label()) {
            test.push(s);
        } else {
            rest.push(s);
        }
    }

    rng.shuffle(&mut rest);
    let fill_test = target_test.saturating_sub(test.len()).min(rest.len());
    test.extend(rest.drain(..fill_test));
    let take_train = target_train.min(rest.len());
    let validation: Vec<TimeSeriesSample> = rest.split_off(take_train);
    let train = rest;

    Ok(SplitDataset {
        train,
        validation,
        test,
        test_only_classes: held,
        num_classes: dataset.num_classes,
        channels: dataset.channels,
    })
}

/// Draw a k-shot episode: `min(k, available)` samples per class present in
/// `train`, without replacement. Classes absent from `train` contribute
/// nothing, so heavy-tailed pools cap rare classes below `k`.
pub fn sample_few_shot(
    train: &[TimeSeriesSample],
    k: usize,
    rng: &mut Rng,
) -> Result<Vec<TimeSeriesSample>> {
    if train.is_empty() {
        return Err(invalid("cannot sample an episode from an empty train split"));
    }
    if k == 0 {
        return Err(invalid("shot count must be at least 1"));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in train.iter().enumerate() {
        by_class.entry(s.label()).or_default().push(i);
    }
    let mut episode = Vec::new();
    for (_, indices) in by_class {
        let take = k.min(indices.len());
        let picks = rng.sample_indices(indices.len(), take);
        for p in picks {
            episode.push(train[indices[p]].clone());
        }
    }
    Ok(episode)
}

/// Bijection between a sparse set of global class ids and the dense local
/// ids a classification head is trained on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    to_local: BTreeMap<usize, usize>,
    to_global: Vec<usize>,
}

impl ClassMap {
    /// Build from the classes present in `samples`, in ascending global order.
    pub fn from_samples(samples: &[TimeSeriesSample]) -> Self {
        let mut globals: Vec<usize> = samples.iter().map(|s| s.label()).collect();
        globals.sort_unstable();
        globals.dedup();
        let to_local = globals
            .iter()
            .enumerate()
            .map(|(local, &global)| (global, local))
            .collect();
        ClassMap {
            to_local,
            to_global: globals,
        }
    }

    pub fn len(&self) -> usize {
        self.to_global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_global.is_empty()
    }

    pub fn local(&self, global: usize) -> Option<usize> {
        self.to_local.get(&global).copied()
    }

    pub fn global(&self, local: usize) -> usize {
        self.to_global[local]
    }

    /// Relabel to local ids, dropping samples whose class is unmapped.
    pub fn relabel(&self, samples: &[TimeSeriesSample]) -> Vec<TimeSeriesSample> {
        samples
            .iter()
            .filter_map(|s| self.local(s.label()).map(|l| s.with_label(l)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_validation() {
        let obs = Mat::zeros(3, 2);
        assert!(TimeSeriesSample::new(vec![1, 5, 9], obs.clone(), 0).is_ok());
        // Equal consecutive days are allowed (two observations on one day).
        assert!(TimeSeriesSample::new(vec![1, 5, 5], obs.clone(), 0).is_ok());
        assert!(TimeSeriesSample::new(vec![5, 1, 9], obs.clone(), 0).is_err());
        assert!(TimeSeriesSample::new(vec![1, 5, 366], obs.clone(), 0).is_err());
        assert!(TimeSeriesSample::new(vec![1, 5], obs, 0).is_err());
        assert!(TimeSeriesSample::new(vec![], Mat::zeros(0, 2), 0).is_err());
    }

    #[test]
    fn head_class_fraction_is_respected() {
        let cfg = GeneratorConfig {
            total_samples: 20_000,
            ..GeneratorConfig::default()
        };
        let data = generate(&cfg).unwrap();
        let counts = class_counts(&data.samples, cfg.num_classes);
        let head = counts[0] as f64 / cfg.total_samples as f64;
        assert!((head - 0.46).abs() < 0.01, "head fraction {head}");
    }

    #[test]
    fn zero_noise_makes_class_and_days_deterministic() {
        let cfg = GeneratorConfig {
            noise_scale: 0.0,
            total_samples: 3000,
            ..GeneratorConfig::default()
        };
        let data = generate(&cfg).unwrap();
        // Two samples of the same class observed on identical days must agree.
        for a in &data.samples {
            for b in &data.samples {
                if a.label() == b.label() && a.days() == b.days() {
                    assert_eq!(a.observations().as_slice(), b.observations().as_slice());
                }
            }
        }
    }

    #[test]
    fn steep_tail_produces_singleton_classes() {
        let cfg = GeneratorConfig {
            tail_exponent: 3.0,
            num_classes: 20,
            total_samples: 3000,
            seed: 5,
            ..GeneratorConfig::default()
        };
        let data = generate(&cfg).unwrap();
        let counts = class_counts(&data.samples, cfg.num_classes);
        assert!(
            counts.iter().any(|&c| c == 1),
            "expected a singleton class in {counts:?}"
        );
    }

    #[test]
    fn label_marginals_pass_chi_square() {
        let cfg = GeneratorConfig {
            total_samples: 20_000,
            seed: 9,
            ..GeneratorConfig::default()
        };
        let data = generate(&cfg).unwrap();
        let counts = class_counts(&data.samples, cfg.num_classes);
        let probs = cfg.class_probabilities();
        let n = cfg.total_samples as f64;
        let chi2: f64 = counts
            .iter()
            .zip(&probs)
            .map(|(&c, &p)| {
                let expected = n * p;
                (c as f64 - expected) * (c as f64 - expected) / expected
            })
            .sum();
        // Critical value of chi-square with 11 dof at p = 0.001.
        assert!(chi2 < 31.264, "chi2 {chi2}");
    }

    #[test]
    fn generate_rejects_infeasible_configs() {
        let cfg = GeneratorConfig {
            total_samples: 5,
            ..GeneratorConfig::default()
        };
        assert!(generate(&cfg).is_err());
        let cfg = GeneratorConfig {
            test_only_classes: 12,
            ..GeneratorConfig::default()
        };
        assert!(generate(&cfg).is_err());
        let cfg = GeneratorConfig {
            head_class_fraction: 1.2,
            ..GeneratorConfig::default()
        };
        assert!(generate(&cfg).is_err());
    }

    fn small_split() -> SplitDataset {
        let cfg = GeneratorConfig {
            total_samples: 10_000,
            seed: 3,
            ..GeneratorConfig::default()
        };
        let data = generate(&cfg).unwrap();
        let mut rng = Rng::with_stream(cfg.seed, 0x5);
        split(data, (0.6, 0.2, 0.2), cfg.test_only_classes, &mut rng).unwrap()
    }

    #[test]
    fn split_sizes_match_fractions() {
        let s = small_split();
        let n = s.train.len() + s.validation.len() + s.test.len();
        assert_eq!(n, 10_000);
        assert!((s.train.len() as i64 - 6000).abs() <= 1, "{}", s.train.len());
        assert!((s.validation.len() as i64 - 2000).abs() <= 1);
        assert!((s.test.len() as i64 - 2000).abs() <= 1);
    }

    #[test]
    fn test_only_classes_never_leak() {
        let s = small_split();
        assert_eq!(s.test_only_classes.len(), 2);
        for &c in &s.test_only_classes {
            assert_eq!(class_counts(&s.train, s.num_classes)[c], 0);
            assert_eq!(class_counts(&s.validation, s.num_classes)[c], 0);
            assert!(class_counts(&s.test, s.num_classes)[c] > 0);
        }
    }

    #[test]
    fn split_partitions_without_loss() {
        let cfg = GeneratorConfig {
            total_samples: 2000,
            seed: 11,
            ..GeneratorConfig::default()
        };
        let data = generate(&cfg).unwrap();
        let reference = data.samples.clone();
        let mut rng = Rng::new(1);
        let s = split(data, (0.6, 0.2, 0.2), 2, &mut rng).unwrap();
        let mut together: Vec<&TimeSeriesSample> = Vec::new();
        together.extend(&s.train);
        together.extend(&s.validation);
        together.extend(&s.test);
        assert_eq!(together.len(), reference.len());
        // Same multiset: compare under a stable total order on samples.
        let key = |s: &TimeSeriesSample| {
            (
                s.label(),
                s.days().to_vec(),
                s.observations()
                    .as_slice()
                    .iter()
                    .map(|v| v.to_bits())
                    .collect::<Vec<_>>(),
            )
        };
        let mut a: Vec<_> = together.into_iter().map(key).collect();
        let mut b: Vec<_> = reference.iter().map(key).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn few_shot_counts_are_min_k_available() {
        let s = small_split();
        let pools = class_counts(&s.train, s.num_classes);
        for &k in &[1usize, 5, 20, 500] {
            let mut rng = Rng::new(77);
            let episode = sample_few_shot(&s.train, k, &mut rng).unwrap();
            let got = class_counts(&episode, s.num_classes);
            for c in 0..s.num_classes {
                assert_eq!(got[c], k.min(pools[c]), "class {c} at k {k}");
            }
        }
    }

    #[test]
    fn one_shot_gives_one_per_present_class() {
        let s = small_split();
        let mut rng = Rng::new(8);
        let episode = sample_few_shot(&s.train, 1, &mut rng).unwrap();
        let present = class_counts(&s.train, s.num_classes)
            .iter()
            .filter(|&&c| c > 0)
            .count();
        assert_eq!(episode.len(), present);
    }

    #[test]
    fn saturated_k_returns_whole_train_split() {
        let s = small_split();
        let max_pool = *class_counts(&s.train, s.num_classes).iter().max().unwrap();
        let mut rng = Rng::new(9);
        let episode = sample_few_shot(&s.train, max_pool, &mut rng).unwrap();
        assert_eq!(episode.len(), s.train.len());
        let a = class_counts(&episode, s.num_classes);
        let b = class_counts(&s.train, s.num_classes);
        assert_eq!(a, b);
    }

    #[test]
    fn episodes_are_seed_deterministic() {
        let s = small_split();
        let e1 = sample_few_shot(&s.train, 5, &mut Rng::new(123)).unwrap();
        let e2 = sample_few_shot(&s.train, 5, &mut Rng::new(123)).unwrap();
        assert_eq!(e1, e2);
        assert!(sample_few_shot(&[], 5, &mut Rng::new(0)).is_err());
        assert!(sample_few_shot(&s.train, 0, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn class_map_round_trips() {
        let s = small_split();
        let map = ClassMap::from_samples(&s.train);
        assert!(map.len() <= s.num_classes - s.test_only_classes.len());
        for local in 0..map.len() {
            assert_eq!(map.local(map.global(local)), Some(local));
        }
        for &c in &s.test_only_classes {
            assert_eq!(map.local(c), None);
        }
        let relabeled = map.relabel(&s.train);
        assert_eq!(relabeled.len(), s.train.len());
        assert!(relabeled.iter().all(|x| x.label() < map.len()));
    }
}
