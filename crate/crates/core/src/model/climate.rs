//! Climate branch: a recurrent summary of each image's monthly window,
//! projected to a `D×1×1` bottleneck and grown to every pyramid level by
//! repeated nearest-×2 upsampling and 3×3 convolutions.

use candle_core::Tensor;

use super::layers::{gelu, Conv2d, Linear, Lstm};
use super::params::ParamStore;
use crate::error::Result;
use crate::ops;

/// Number of ×2 stages that take a 1×1 map closest to (without exceeding)
/// an `h×w` level: `floor(log2(max(h, w)))`.
pub fn upsample_stages(h: usize, w: usize) -> usize {
    let m = h.max(w).max(1);
    (usize::BITS - 1 - m.leading_zeros()) as usize
}

struct LevelBranch {
    entry: Conv2d,
    stages: Vec<Conv2d>,
    dims: (usize, usize),
}

pub struct ClimateEncoder {
    lstm: Lstm,
    proj: Linear,
    dim: usize,
    levels: Vec<LevelBranch>,
}

impl ClimateEncoder {
    /// `level_shapes` holds `(channels, h, w)` per pyramid level.
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        vars: usize,
        hidden: usize,
        dim: usize,
        level_shapes: &[(usize, usize, usize)],
    ) -> Result<Self> {
        let lstm = Lstm::new(ps, &format!("{name}.lstm"), vars, hidden)?;
        let proj = Linear::new(ps, &format!("{name}.proj"), hidden, dim)?;
        let levels = level_shapes
            .iter()
            .enumerate()
            .map(|(l, &(c, h, w))| {
                let entry = Conv2d::pointwise(ps, &format!("{name}.l{l}.entry"), dim, c)?;
                let stages = (0..upsample_stages(h, w))
                    .map(|s| Conv2d::same3(ps, &format!("{name}.l{l}.up{s}"), c, c))
                    .collect::<Result<_>>()?;
                Ok(LevelBranch {
                    entry,
                    stages,
                    dims: (h, w),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { lstm, proj, dim, levels })
    }

    pub fn stages_per_level(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.stages.len()).collect()
    }

    /// `[B, T1, C1]` windows to one `[B, C_l, H_l, W_l]` map per level.
    pub fn forward(&self, windows: &Tensor) -> Result<Vec<Tensor>> {
        let (b, _, _) = windows.dims3()?;
        let f = self.proj.forward(&self.lstm.forward(windows)?)?;
        let f = f.reshape((b, self.dim, 1, 1))?;
        self.levels
            .iter()
            .map(|level| {
                let mut k = gelu(&level.entry.forward(&f)?)?;
                for conv in &level.stages {
                    let (_, _, h, w) = k.dims4()?;
                    k = gelu(&conv.forward(&k.upsample_nearest2d(2 * h, 2 * w)?)?)?;
                }
                ops::resize_nearest(&k, level.dims.0, level.dims.1)
            })
            .collect()
    }
}
