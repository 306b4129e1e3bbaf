//! Confusion-matrix evaluation: accuracy, Cohen's kappa, macro-F1.
//!
//! The matrix is indexed `(true class, predicted class)` over a fixed class
//! space, so classes that are never predictable (e.g. present only in the
//! test split) still occupy a row and drag macro-F1 down, which is the
//! intended behaviour under heavy imbalance.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(invalid("confusion matrix needs at least one class"));
        }
        Ok(ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        })
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if classes == 0 || counts.len() != classes * classes {
            return Err(invalid(format!(
                "expected {classes}x{classes} counts, got {}",
                counts.len()
            )));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) -> Result<()> {
        if true_class >= self.classes || predicted >= self.classes {
            return Err(invalid(format!(
                "class pair ({true_class}, {predicted}) out of range for {} classes",
                self.classes
            )));
        }
        self.counts[true_class * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn count(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Element-wise merge of two operand matrices (for sharded evaluation).
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.classes != other.classes {
            return Err(invalid("cannot merge matrices of different sizes"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    fn row_total(&self, c: usize) -> u64 {
        (0..self.classes).map(|j| self.count(c, j)).sum()
    }

    fn col_total(&self, c: usize) -> u64 {
        (0..self.classes).map(|i| self.count(i, c)).sum()
    }

    fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.count(c, c)).sum()
    }

    fn require_nonempty(&self) -> Result<u64> {
        let total = self.total();
        if total == 0 {
            return Err(invalid("confusion matrix is empty"));
        }
        Ok(total)
    }

    /// Fraction of correct predictions.
    pub fn accuracy(&self) -> Result<f64> {
        let total = self.require_nonempty()?;
        Ok(self.trace() as f64 / total as f64)
    }

    /// Cohen's kappa `(p_o − p_e) / (1 − p_e)`; defined as 0 when the
    /// expected agreement is already 1.
    pub fn cohen_kappa(&self) -> Result<f64> {
        let total = self.require_nonempty()? as f64;
        let p_o = self.trace() as f64 / total;
        let p_e = (0..self.classes)
            .map(|c| self.row_total(c) as f64 * self.col_total(c) as f64)
            .sum::<f64>()
            / (total * total);
        if p_e >= 1.0 {
            return Ok(0.0);
        }
        Ok((p_o - p_e) / (1.0 - p_e))
    }

    /// Unweighted mean of per-class F1. A class with no true samples and no
    /// predictions contributes 0, penalizing models that ignore rare classes.
    pub fn macro_f1(&self) -> Result<f64> {
        self.require_nonempty()?;
        let mut sum = 0.0;
        for c in 0..self.classes {
            let tp = self.count(c, c) as f64;
            let pred = self.col_total(c) as f64;
            let truth = self.row_total(c) as f64;
            if tp > 0.0 {
                let precision = tp / pred;
                let recall = tp / truth;
                sum += 2.0 * precision * recall / (precision + recall);
            }
        }
        Ok(sum / self.classes as f64)
    }

    /// The matrix with rows and columns simultaneously permuted by `perm`
    /// (`perm[new] = old`).
    pub fn permuted(&self, perm: &[usize]) -> Result<ConfusionMatrix> {
        if perm.len() != self.classes {
            return Err(invalid("permutation length mismatch"));
        }
        let mut out = ConfusionMatrix::new(self.classes)?;
        for (i_new, &i_old) in perm.iter().enumerate() {
            for (j_new, &j_old) in perm.iter().enumerate() {
                out.counts[i_new * self.classes + j_new] = self.count(i_old, j_old);
            }
        }
        Ok(out)
    }
}
