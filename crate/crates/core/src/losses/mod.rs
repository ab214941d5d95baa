//! Training losses.
//!
//! Regression losses take `[N, 1, H, W]` prediction and target tensors plus an
//! optional 0/1 validity mask of the same shape. Reductions are means over
//! valid support.

mod classification;
mod wavelet;

pub use classification::{combo_classification_loss, ComboLossConfig};
pub use wavelet::{dwt2, dwt2_tensor, idwt2, DetailBands, WaveletDecomposition, WaveletFamily};

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionLossConfig {
    pub huber_delta: f64,
    /// Downscaling factors of the multiscale term.
    pub scales: Vec<usize>,
    pub wavelet: WaveletFamily,
    pub wavelet_levels: usize,
    /// Weight of the approximation coefficients.
    pub alpha_low: f64,
    /// One weight per detail level, finest first.
    pub detail_weights: Vec<f64>,
    /// Mix between the multiscale (1.0) and wavelet (0.0) terms.
    pub alpha_total: f64,
}

impl Default for RegressionLossConfig {
    fn default() -> Self {
        Self {
            huber_delta: 1.0,
            scales: vec![2, 4],
            wavelet: WaveletFamily::Haar,
            wavelet_levels: 2,
            alpha_low: 1.0,
            detail_weights: vec![1.0, 1.0],
            alpha_total: 0.5,
        }
    }
}

impl RegressionLossConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.huber_delta > 0.0) {
            return bad(format!("huber_delta must be positive, got {}", self.huber_delta));
        }
        if self.scales.is_empty() || self.scales.iter().any(|&s| s < 2) {
            return bad(format!("scales must be a nonempty list of integers >= 2, got {:?}", self.scales));
        }
        if self.detail_weights.len() != self.wavelet_levels {
            return bad(format!(
                "{} detail weights for {} wavelet levels",
                self.detail_weights.len(),
                self.wavelet_levels
            ));
        }
        if self.alpha_low < 0.0 || self.detail_weights.iter().any(|w| *w < 0.0) {
            return bad("wavelet weights must be nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.alpha_total) {
            return bad(format!("alpha_total must lie in [0, 1], got {}", self.alpha_total));
        }
        Ok(())
    }
}

/// Elementwise Huber loss of the error `pred - tgt`.
pub fn huber(pred: &Tensor, tgt: &Tensor, delta: f64) -> Result<Tensor> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("huber delta must be positive, got {delta}")));
    }
    let e = (pred - tgt)?.abs()?;
    let q = e.minimum(delta)?;
    Ok(((q.sqr()? * 0.5)? + ((e - &q)? * delta)?)?)
}

/// Mean Huber over valid pixels.
pub fn mean_huber(pred: &Tensor, tgt: &Tensor, mask: Option<&Tensor>, delta: f64) -> Result<Tensor> {
    let h = huber(pred, tgt, delta)?;
    match mask {
        None => Ok(h.mean_all()?),
        Some(m) => ops::masked_mean(&h, m)?.ok_or(Error::EmptyLossSupport),
    }
}

/// Masked average pooling with kernel = stride = `factor`. Extents that are
/// not a multiple of `factor` are zero-padded; padded and invalid pixels get
/// zero weight, so each output cell is the mean of the valid pixels it
/// covers. Returns the pooled grid and the 0/1 mask of cells with any valid
/// pixel.
pub fn downscale(grid: &Tensor, mask: Option<&Tensor>, factor: usize) -> Result<(Tensor, Tensor)> {
    if factor < 2 {
        return Err(Error::InvalidArgument(format!("downscale factor must be >= 2, got {factor}")));
    }
    let (_, _, h, w) = grid.dims4()?;
    let ones;
    let m = match mask {
        Some(m) => m,
        None => {
            ones = grid.ones_like()?;
            &ones
        }
    };
    let pad = |t: &Tensor| -> Result<Tensor> {
        Ok(t.pad_with_zeros(2, 0, h.next_multiple_of(factor) - h)?
            .pad_with_zeros(3, 0, w.next_multiple_of(factor) - w)?)
    };
    let num = pad(&(grid * m)?)?.avg_pool2d(factor)?;
    let den = pad(m)?.avg_pool2d(factor)?.detach();
    let cell_mask = den.gt(0.0)?.to_dtype(grid.dtype())?;
    let safe_den = (&den + (1.0 - &cell_mask)?)?;
    Ok(((num / safe_den)?, cell_mask))
}

/// `(1/M) [L(P, T) + sum_i L(D_i(P), D_i(T))]` over the configured scales.
pub fn multiscale_loss(pred: &Tensor, tgt: &Tensor, mask: Option<&Tensor>, cfg: &RegressionLossConfig) -> Result<Tensor> {
    let mut total = mean_huber(pred, tgt, mask, cfg.huber_delta)?;
    for &s in &cfg.scales {
        let (dp, cm) = downscale(pred, mask, s)?;
        let (dt, _) = downscale(tgt, mask, s)?;
        total = (total + mean_huber(&dp, &dt, Some(&cm), cfg.huber_delta)?)?;
    }
    Ok((total / cfg.scales.len() as f64)?)
}

/// `alpha_low * L(Y_L) + sum_i w_i * L(Y_H,i)`, with the three orientations of
/// a level pooled into one mean. Invalid pixels take the target value in the
/// prediction, so they contribute no error to any coefficient.
pub fn wavelet_loss(pred: &Tensor, tgt: &Tensor, mask: Option<&Tensor>, cfg: &RegressionLossConfig) -> Result<Tensor> {
    let pred = match mask {
        Some(m) => {
            if ops::scalar(&m.sum_all()?)? == 0.0 {
                return Err(Error::EmptyLossSupport);
            }
            m.ne(0.0)?.where_cond(pred, tgt)?
        }
        None => pred.clone(),
    };
    let (la, ld) = dwt2_tensor(&pred, cfg.wavelet_levels, cfg.wavelet)?;
    let (ta, td) = dwt2_tensor(tgt, cfg.wavelet_levels, cfg.wavelet)?;
    let mut total = (mean_huber(&la, &ta, None, cfg.huber_delta)? * cfg.alpha_low)?;
    for ((p, t), w) in ld.iter().zip(&td).zip(&cfg.detail_weights) {
        total = (total + (mean_huber(p, t, None, cfg.huber_delta)? * *w)?)?;
    }
    Ok(total)
}

/// `alpha_total * L_MS + (1 - alpha_total) * L_W`.
pub fn total_regression_loss(pred: &Tensor, tgt: &Tensor, mask: Option<&Tensor>, cfg: &RegressionLossConfig) -> Result<Tensor> {
    let a = cfg.alpha_total;
    let ms = multiscale_loss(pred, tgt, mask, cfg)?;
    if a == 1.0 {
        return Ok(ms);
    }
    let w = wavelet_loss(pred, tgt, mask, cfg)?;
    if a == 0.0 {
        return Ok(w);
    }
    Ok(((ms * a)? + (w * (1.0 - a))?)?)
}
