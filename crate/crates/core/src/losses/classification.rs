//! Generalized Dice + focal loss for segmentation with an ignore label.

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops;
use crate::raster::IGNORE_LABEL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComboLossConfig {
    pub focal_gamma: f64,
    pub dice_weight: f64,
    pub focal_weight: f64,
}

impl Default for ComboLossConfig {
    fn default() -> Self {
        Self {
            focal_gamma: 2.0,
            dice_weight: 1.0,
            focal_weight: 1.0,
        }
    }
}

/// Per-class log-probabilities `[N, K, H, W]`. A single logit channel is the
/// binary case and expands to the two classes (negative, positive).
fn class_log_probs(logits: &Tensor) -> Result<Tensor> {
    let (_, k, _, _) = logits.dims4()?;
    if k == 1 {
        let neg = ops::log_sigmoid(&logits.neg()?)?;
        let pos = ops::log_sigmoid(logits)?;
        Ok(Tensor::cat(&[neg, pos], 1)?)
    } else {
        ops::log_softmax(logits, 1)
    }
}

/// `dice_weight * GDL + focal_weight * focal` over pixels whose label is not
/// [`IGNORE_LABEL`].
///
/// `logits` is `[N, K, H, W]` (`K = 1` for binary), `labels` is `[N, H, W]`
/// of class indices as `u8`. Generalized Dice weights each class by the
/// inverse squared label count; a class absent from the labels takes the
/// largest weight among present classes.
pub fn combo_classification_loss(logits: &Tensor, labels: &Tensor, cfg: &ComboLossConfig) -> Result<Tensor> {
    let (n, k, h, w) = logits.dims4()?;
    if labels.dims() != [n, h, w] {
        return Err(crate::shape_err!("labels {:?} vs logits {:?}", labels.dims(), logits.dims()));
    }
    let classes = if k == 1 { 2 } else { k };
    let dtype = logits.dtype();
    let labels = labels.to_dtype(DType::U8)?.unsqueeze(1)?;
    let valid = labels.ne(IGNORE_LABEL as f64)?.to_dtype(dtype)?;
    let valid_count = ops::scalar(&valid.sum_all()?)?;
    if valid_count == 0.0 {
        return Err(Error::EmptyLossSupport);
    }
    let onehot: Vec<Tensor> = (0..classes)
        .map(|c| Ok(labels.eq(c as f64)?.to_dtype(dtype)?))
        .collect::<Result<_>>()?;
    let onehot = Tensor::cat(&onehot, 1)?;

    let logp = class_log_probs(logits)?;
    let p = logp.exp()?;

    let counts = ops::to_f64_vec(&onehot.sum((0, 2, 3))?)?;
    let max_weight = counts
        .iter()
        .filter(|c| **c > 0.0)
        .map(|c| 1.0 / (c * c))
        .fold(0.0, f64::max);
    let weights: Vec<f64> = counts
        .iter()
        .map(|&c| if c > 0.0 { 1.0 / (c * c) } else { max_weight })
        .collect();
    let weights = Tensor::from_vec(weights, (1, classes), logits.device())?.to_dtype(dtype)?;
    let pv = p.broadcast_mul(&valid)?;
    let inter = (&pv * &onehot)?.sum((0, 2, 3))?.unsqueeze(0)?;
    let union = (&pv + &onehot)?.sum((0, 2, 3))?.unsqueeze(0)?;
    let num = (inter * &weights)?.sum_all()?;
    let den = (union * &weights)?.sum_all()?;
    let dice = (1.0 - ((num * 2.0)? / den)?)?;

    let modulator = (1.0 - &p)?.powf(cfg.focal_gamma)?;
    let per_pixel = (modulator * logp)?.mul(&onehot)?.sum_keepdim(1)?.neg()?;
    let focal = (per_pixel.broadcast_mul(&valid)?.sum_all()? / valid_count)?;

    Ok(((dice * cfg.dice_weight)? + (focal * cfg.focal_weight)?)?)
}
