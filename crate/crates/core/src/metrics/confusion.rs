use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::raster::IGNORE_LABEL;
use crate::shape_err;

/// Precision, recall and F1 of one class, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a zero denominator forced a score to 0.
    pub undefined: bool,
    pub support: u64,
}

/// Mergeable `gt x pred` pixel counts. Pixels whose ground truth is
/// [`IGNORE_LABEL`] are skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionAccumulator {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionAccumulator {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn count(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn add(&mut self, pred: &[u8], gt: &[u8]) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(shape_err!("{} predictions for {} labels", pred.len(), gt.len()));
        }
        for (&p, &g) in pred.iter().zip(gt) {
            if g == IGNORE_LABEL {
                continue;
            }
            let (p, g) = (p as usize, g as usize);
            if p >= self.classes || g >= self.classes {
                return Err(crate::Error::InvalidArgument(format!(
                    "label {} outside {} classes",
                    p.max(g),
                    self.classes
                )));
            }
            self.counts[g * self.classes + p] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionAccumulator) -> Result<()> {
        if other.classes != self.classes {
            return Err(shape_err!("merging {} and {} classes", self.classes, other.classes));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn scores(&self, class: usize) -> ClassScores {
        let tp = self.count(class, class);
        let gt_total: u64 = (0..self.classes).map(|p| self.count(class, p)).sum();
        let pred_total: u64 = (0..self.classes).map(|g| self.count(g, class)).sum();
        let ratio = |num: u64, den: u64| (den > 0).then(|| 100.0 * num as f64 / den as f64);
        let precision = ratio(tp, pred_total);
        let recall = ratio(tp, gt_total);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        ClassScores {
            precision: precision.unwrap_or(0.0),
            recall: recall.unwrap_or(0.0),
            f1: f1.unwrap_or(0.0),
            undefined: precision.is_none() || recall.is_none(),
            support: gt_total,
        }
    }

    pub fn all_scores(&self) -> Vec<ClassScores> {
        (0..self.classes).map(|c| self.scores(c)).collect()
    }

    /// Fraction of evaluated pixels whose prediction is correct, in percent.
    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        let diag: u64 = (0..self.classes).map(|c| self.count(c, c)).sum();
        (total > 0).then(|| 100.0 * diag as f64 / total as f64)
    }
}
