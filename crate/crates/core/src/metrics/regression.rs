use serde::{Deserialize, Serialize};

use super::confusion::{ClassScores, ConfusionAccumulator};
use crate::error::{Error, Result};
use crate::shape_err;

/// Pooled regression statistics over valid pixels. Mergeable: Pearson moments
/// combine with the pairwise update, and the `(gt, |err|)` pairs kept for
/// top-fraction MAE concatenate in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegressionAccumulator {
    n: u64,
    abs_err: f64,
    mean_p: f64,
    mean_g: f64,
    m2_p: f64,
    m2_g: f64,
    co: f64,
    pairs: Vec<(f64, f64)>,
}

impl RegressionAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn add(&mut self, pred: &[f64], gt: &[f64], valid: &[bool]) -> Result<()> {
        if pred.len() != gt.len() || gt.len() != valid.len() {
            return Err(shape_err!("pred {}, gt {}, mask {}", pred.len(), gt.len(), valid.len()));
        }
        for ((&p, &g), _) in pred.iter().zip(gt).zip(valid).filter(|(_, v)| **v) {
            self.n += 1;
            let n = self.n as f64;
            let dp = p - self.mean_p;
            let dg = g - self.mean_g;
            self.mean_p += dp / n;
            self.mean_g += dg / n;
            self.m2_p += dp * (p - self.mean_p);
            self.m2_g += dg * (g - self.mean_g);
            self.co += dp * (g - self.mean_g);
            self.abs_err += (p - g).abs();
            self.pairs.push((g, (p - g).abs()));
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &RegressionAccumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let dp = other.mean_p - self.mean_p;
        let dg = other.mean_g - self.mean_g;
        self.m2_p += other.m2_p + dp * dp * na * nb / n;
        self.m2_g += other.m2_g + dg * dg * na * nb / n;
        self.co += other.co + dp * dg * na * nb / n;
        self.mean_p += dp * nb / n;
        self.mean_g += dg * nb / n;
        self.n += other.n;
        self.abs_err += other.abs_err;
        self.pairs.extend_from_slice(&other.pairs);
    }

    pub fn mae(&self) -> Option<f64> {
        (self.n > 0).then(|| self.abs_err / self.n as f64)
    }

    /// MAE over the `ceil(fraction * n)` pixels with the largest
    /// ground-truth magnitude; ties keep insertion order.
    pub fn mae_at_top(&self, fraction: f64) -> Result<f64> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!("fraction must lie in (0, 1], got {fraction}")));
        }
        if self.pairs.is_empty() {
            return Err(Error::Undefined("no valid pixels".into()));
        }
        let k = ((fraction * self.pairs.len() as f64).ceil() as usize).clamp(1, self.pairs.len());
        if k == self.pairs.len() {
            return Ok(self.abs_err / self.n as f64);
        }
        let mut order: Vec<usize> = (0..self.pairs.len()).collect();
        order.sort_by(|&a, &b| self.pairs[b].0.abs().total_cmp(&self.pairs[a].0.abs()));
        Ok(order[..k].iter().map(|&i| self.pairs[i].1).sum::<f64>() / k as f64)
    }

    /// Sample correlation; `None` with fewer than two pixels or zero variance.
    pub fn pearson(&self) -> Option<f64> {
        if self.n < 2 || self.m2_p <= 0.0 || self.m2_g <= 0.0 {
            return None;
        }
        Some((self.co / (self.m2_p * self.m2_g).sqrt()).clamp(-1.0, 1.0))
    }
}

pub fn mae(pred: &[f64], gt: &[f64], valid: &[bool]) -> Result<f64> {
    let mut acc = RegressionAccumulator::new();
    acc.add(pred, gt, valid)?;
    acc.mae().ok_or_else(|| Error::Undefined("no valid pixels".into()))
}

pub fn mae_at_top(pred: &[f64], gt: &[f64], valid: &[bool], fraction: f64) -> Result<f64> {
    let mut acc = RegressionAccumulator::new();
    acc.add(pred, gt, valid)?;
    acc.mae_at_top(fraction)
}

pub fn pearson(pred: &[f64], gt: &[f64], valid: &[bool]) -> Result<f64> {
    let mut acc = RegressionAccumulator::new();
    acc.add(pred, gt, valid)?;
    acc.pearson()
        .ok_or_else(|| Error::Undefined("correlation needs two pixels and nonzero variance".into()))
}

/// Positive-class confusion after binarizing both maps at `> t`.
pub fn threshold_confusion(pred: &[f64], gt: &[f64], valid: &[bool], t: f64) -> Result<ConfusionAccumulator> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {t}")));
    }
    if pred.len() != gt.len() || gt.len() != valid.len() {
        return Err(shape_err!("pred {}, gt {}, mask {}", pred.len(), gt.len(), valid.len()));
    }
    let bin = |v: f64| u8::from(v > t);
    let p: Vec<u8> = pred.iter().map(|&v| bin(v)).collect();
    let g: Vec<u8> = gt
        .iter()
        .zip(valid)
        .map(|(&v, &ok)| if ok { bin(v) } else { crate::raster::IGNORE_LABEL })
        .collect();
    let mut acc = ConfusionAccumulator::new(2);
    acc.add(&p, &g)?;
    Ok(acc)
}

/// `P@t`, `R@t`, `F@t` of the positive class.
pub fn thresholded_metrics(pred: &[f64], gt: &[f64], valid: &[bool], t: f64) -> Result<ClassScores> {
    Ok(threshold_confusion(pred, gt, valid, t)?.scores(1))
}
