//! Orthonormal 2-D Haar transform, as plain `f64` arrays (with inverse) and as
//! a differentiable tensor op used inside the training loss.
//!
//! Per 2×2 block `[a b; c d]` one level produces
//! `LL = (a+b+c+d)/2`, `H = (a+b-c-d)/2`, `V = (a-b+c-d)/2`, `D = (a-b-c+d)/2`.
//! Odd extents are first extended by repeating the last row/column
//! (half-sample symmetric padding), so energy is conserved only for even extents.

use candle_core::Tensor;
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveletFamily {
    #[default]
    Haar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetailBands {
    pub horizontal: Array2<f64>,
    pub vertical: Array2<f64>,
    pub diagonal: Array2<f64>,
}

/// Multi-level decomposition. `details[0]` is the finest level.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletDecomposition {
    pub approx: Array2<f64>,
    pub details: Vec<DetailBands>,
    /// Extent of the input to each level, before padding.
    pub input_dims: Vec<(usize, usize)>,
}

impl WaveletDecomposition {
    pub fn energy(&self) -> f64 {
        let sq = |a: &Array2<f64>| a.iter().map(|v| v * v).sum::<f64>();
        sq(&self.approx)
            + self
                .details
                .iter()
                .map(|d| sq(&d.horizontal) + sq(&d.vertical) + sq(&d.diagonal))
                .sum::<f64>()
    }
}

fn check_levels(mut dims: (usize, usize), levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::InvalidArgument("wavelet levels must be >= 1".into()));
    }
    for level in 0..levels {
        if dims.0 < 2 || dims.1 < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid too small for {levels} wavelet levels (extent {dims:?} at level {level})"
            )));
        }
        dims = (dims.0.div_ceil(2), dims.1.div_ceil(2));
    }
    Ok(())
}

fn pad_even(x: &Array2<f64>) -> Array2<f64> {
    let (h, w) = x.dim();
    let (ph, pw) = (h + h % 2, w + w % 2);
    Array2::from_shape_fn((ph, pw), |(r, c)| x[[r.min(h - 1), c.min(w - 1)]])
}

pub fn dwt2(grid: &Array2<f64>, levels: usize, family: WaveletFamily) -> Result<WaveletDecomposition> {
    let WaveletFamily::Haar = family;
    check_levels(grid.dim(), levels)?;
    let mut approx = grid.clone();
    let mut details = Vec::with_capacity(levels);
    let mut input_dims = Vec::with_capacity(levels);
    for _ in 0..levels {
        input_dims.push(approx.dim());
        let x = pad_even(&approx);
        let (h, w) = (x.dim().0 / 2, x.dim().1 / 2);
        let mut ll = Array2::zeros((h, w));
        let mut hh = Array2::zeros((h, w));
        let mut vv = Array2::zeros((h, w));
        let mut dd = Array2::zeros((h, w));
        for r in 0..h {
            for c in 0..w {
                let a = x[[2 * r, 2 * c]];
                let b = x[[2 * r, 2 * c + 1]];
                let cc = x[[2 * r + 1, 2 * c]];
                let d = x[[2 * r + 1, 2 * c + 1]];
                ll[[r, c]] = (a + b + cc + d) / 2.0;
                hh[[r, c]] = (a + b - cc - d) / 2.0;
                vv[[r, c]] = (a - b + cc - d) / 2.0;
                dd[[r, c]] = (a - b - cc + d) / 2.0;
            }
        }
        details.push(DetailBands {
            horizontal: hh,
            vertical: vv,
            diagonal: dd,
        });
        approx = ll;
    }
    Ok(WaveletDecomposition {
        approx,
        details,
        input_dims,
    })
}

pub fn idwt2(dec: &WaveletDecomposition) -> Array2<f64> {
    let mut approx = dec.approx.clone();
    for (bands, &(oh, ow)) in dec.details.iter().zip(&dec.input_dims).rev() {
        let (h, w) = approx.dim();
        let mut x = Array2::zeros((2 * h, 2 * w));
        for r in 0..h {
            for c in 0..w {
                let (l, hh, v, d) = (
                    approx[[r, c]],
                    bands.horizontal[[r, c]],
                    bands.vertical[[r, c]],
                    bands.diagonal[[r, c]],
                );
                x[[2 * r, 2 * c]] = (l + hh + v + d) / 2.0;
                x[[2 * r, 2 * c + 1]] = (l + hh - v - d) / 2.0;
                x[[2 * r + 1, 2 * c]] = (l - hh + v - d) / 2.0;
                x[[2 * r + 1, 2 * c + 1]] = (l - hh - v + d) / 2.0;
            }
        }
        approx = x.slice(s![..oh, ..ow]).to_owned();
    }
    approx
}

/// Tensor decomposition of an `[N, 1, H, W]` batch: the final approximation
/// and, per level (finest first), the three detail bands stacked as
/// `[N, 3, h, w]` in horizontal, vertical, diagonal order.
pub fn dwt2_tensor(x: &Tensor, levels: usize, family: WaveletFamily) -> Result<(Tensor, Vec<Tensor>)> {
    let WaveletFamily::Haar = family;
    let (_, c, h, w) = x.dims4()?;
    if c != 1 {
        return Err(crate::shape_err!("wavelet input must have one channel, got {c}"));
    }
    check_levels((h, w), levels)?;
    let kernel = Tensor::new(
        &[
            [[[0.5, 0.5], [0.5, 0.5]]],
            [[[0.5, 0.5], [-0.5, -0.5]]],
            [[[0.5, -0.5], [0.5, -0.5]]],
            [[[0.5, -0.5], [-0.5, 0.5]]],
        ],
        x.device(),
    )?
    .to_dtype(x.dtype())?;
    let mut approx = x.clone();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (_, _, h, w) = approx.dims4()?;
        let padded = approx.pad_with_same(2, 0, h % 2)?.pad_with_same(3, 0, w % 2)?;
        let bands = padded.conv2d(&kernel, 0, 2, 1, 1)?;
        approx = bands.narrow(1, 0, 1)?;
        details.push(bands.narrow(1, 1, 3)?);
    }
    Ok((approx, details))
}
