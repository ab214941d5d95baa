//! Differentiable tensor helpers that candle-core does not ship.

use candle_core::{DType, Device, Tensor};

use crate::error::Result;

/// `0.5 * (1 + tanh(x / 2))`, exactly 0.5 at 0.
pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(((x * 0.5)?.tanh()? + 1.0)?.affine(0.5, 0.0)?)
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    let tail = (x.abs()?.neg()?.exp()? + 1.0)?.log()?;
    Ok((x.relu()? + tail)?)
}

/// `log(sigmoid(x))`.
pub fn log_sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(softplus(&x.neg()?)?.neg()?)
}

/// Log-softmax along `dim`; the shift by the max is detached.
pub fn log_softmax(x: &Tensor, dim: usize) -> Result<Tensor> {
    let max = x.max_keepdim(dim)?.detach();
    let shifted = x.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(dim)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

/// Nearest-neighbour resize of the trailing two axes of an NCHW tensor to
/// `(h, w)`, for arbitrary (non-integer) factors.
pub fn resize_nearest(x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let (_, _, sh, sw) = x.dims4()?;
    if (sh, sw) == (h, w) {
        return Ok(x.clone());
    }
    if h % sh == 0 && w % sw == 0 && h / sh == w / sw {
        return Ok(x.upsample_nearest2d(h, w)?);
    }
    let rows = nearest_indices(sh, h, x.device())?;
    let cols = nearest_indices(sw, w, x.device())?;
    Ok(x.index_select(&rows, 2)?.index_select(&cols, 3)?)
}

fn nearest_indices(src: usize, dst: usize, device: &Device) -> Result<Tensor> {
    let idx: Vec<u32> = (0..dst)
        .map(|i| ((i * src) / dst).min(src - 1) as u32)
        .collect();
    Ok(Tensor::from_vec(idx, dst, device)?)
}

/// Mean over all elements where `mask` is 1, divided by the mask count.
/// Returns `None` when the mask is empty.
pub fn masked_mean(x: &Tensor, mask: &Tensor) -> Result<Option<Tensor>> {
    let count = mask.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    if count == 0.0 {
        return Ok(None);
    }
    Ok(Some(((x * mask)?.sum_all()? / count)?))
}

/// Scalar tensor to `f64`, whatever the float dtype.
pub fn scalar(x: &Tensor) -> Result<f64> {
    Ok(x.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Flattened values as `f64`.
pub fn to_f64_vec(x: &Tensor) -> Result<Vec<f64>> {
    Ok(x.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?)
}
