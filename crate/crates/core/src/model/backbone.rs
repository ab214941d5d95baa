//! Per-image feature pyramids. Both backbones patchify with a 4×4 stride-4
//! stem and halve the resolution at every further level, so level `l` of an
//! `H×W` input is `H/2^(l+2) × W/2^(l+2)`.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::layers::{gelu, ChannelNorm, Conv2d};
use super::params::{Init, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    #[default]
    TinyConvPyramid,
    ConvnextLikeBase,
    ConvnextLikeLarge,
}

impl BackboneKind {
    pub fn default_channels(self) -> Vec<usize> {
        match self {
            BackboneKind::TinyConvPyramid => vec![16, 24, 32, 48],
            BackboneKind::ConvnextLikeBase => vec![128, 256, 512, 1024],
            BackboneKind::ConvnextLikeLarge => vec![192, 384, 768, 1536],
        }
    }

    /// Blocks per level for the ConvNeXt-style backbones.
    pub fn default_depths(self) -> Vec<usize> {
        match self {
            BackboneKind::TinyConvPyramid => vec![1, 1, 1, 1],
            BackboneKind::ConvnextLikeBase | BackboneKind::ConvnextLikeLarge => vec![3, 3, 27, 3],
        }
    }
}

/// Downsampling factor of the first pyramid level.
pub const STEM_STRIDE: usize = 4;

pub trait Backbone {
    /// `[B, C, H, W]` to one map per level, shallowest first.
    fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>>;
    fn channels(&self) -> &[usize];
}

/// Spatial size of each level for an `h×w` input.
pub fn level_dims(h: usize, w: usize, levels: usize) -> Vec<(usize, usize)> {
    (0..levels)
        .map(|l| {
            let f = STEM_STRIDE << l;
            (h / f, w / f)
        })
        .collect()
}

/// Plain conv pyramid: stem (4×4/4), then per level a 2×2/2 downsample
/// followed by a 3×3 convolution, all with GELU.
pub struct TinyConvPyramid {
    stages: Vec<(Conv2d, Conv2d)>,
    channels: Vec<usize>,
}

impl TinyConvPyramid {
    pub fn new(ps: &mut ParamStore, name: &str, cin: usize, channels: &[usize]) -> Result<Self> {
        let mut stages = Vec::with_capacity(channels.len());
        let mut prev = cin;
        for (l, &c) in channels.iter().enumerate() {
            let (k, s) = if l == 0 { (STEM_STRIDE, STEM_STRIDE) } else { (2, 2) };
            let down = Conv2d::new(ps, &format!("{name}.l{l}.down"), prev, c, k, s, 0)?;
            let conv = Conv2d::same3(ps, &format!("{name}.l{l}.conv"), c, c)?;
            stages.push((down, conv));
            prev = c;
        }
        Ok(Self {
            stages,
            channels: channels.to_vec(),
        })
    }
}

impl Backbone for TinyConvPyramid {
    fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut out = Vec::with_capacity(self.stages.len());
        let mut h = x.clone();
        for (down, conv) in &self.stages {
            h = gelu(&down.forward(&h)?)?;
            h = gelu(&conv.forward(&h)?)?;
            out.push(h.clone());
        }
        Ok(out)
    }

    fn channels(&self) -> &[usize] {
        &self.channels
    }
}

/// Global response normalization.
struct Grn {
    gamma: Tensor,
    beta: Tensor,
}

impl Grn {
    fn new(ps: &mut ParamStore, name: &str, c: usize) -> Result<Self> {
        Ok(Self {
            gamma: ps.create(&format!("{name}.gamma"), &[1, c, 1, 1], Init::Const(0.0))?,
            beta: ps.create(&format!("{name}.beta"), &[1, c, 1, 1], Init::Const(0.0))?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let g = (x.sqr()?.sum_keepdim((2, 3))? + 1e-12)?.sqrt()?;
        let n = g.broadcast_div(&(g.mean_keepdim(1)? + 1e-6)?)?;
        let y = x.broadcast_mul(&n)?.broadcast_mul(&self.gamma)?;
        Ok((y.broadcast_add(&self.beta)? + x)?)
    }
}

/// Depthwise 7×7, norm, pointwise expansion ×4, GELU, GRN, pointwise
/// projection, residual.
struct ConvNextBlock {
    dw: Conv2d,
    norm: ChannelNorm,
    pw1: Conv2d,
    grn: Grn,
    pw2: Conv2d,
}

impl ConvNextBlock {
    fn new(ps: &mut ParamStore, name: &str, c: usize) -> Result<Self> {
        Ok(Self {
            dw: Conv2d::grouped(ps, &format!("{name}.dw"), c, c, 7, 1, 3, c)?,
            norm: ChannelNorm::new(ps, &format!("{name}.norm"), c)?,
            pw1: Conv2d::pointwise(ps, &format!("{name}.pw1"), c, 4 * c)?,
            grn: Grn::new(ps, &format!("{name}.grn"), 4 * c)?,
            pw2: Conv2d::pointwise(ps, &format!("{name}.pw2"), 4 * c, c)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.norm.forward(&self.dw.forward(x)?)?;
        let h = self.grn.forward(&gelu(&self.pw1.forward(&h)?)?)?;
        Ok((self.pw2.forward(&h)? + x)?)
    }
}

/// ConvNeXt-V2-style pyramid, randomly initialized.
pub struct ConvNextLike {
    stem: (Conv2d, ChannelNorm),
    downs: Vec<(ChannelNorm, Conv2d)>,
    stages: Vec<Vec<ConvNextBlock>>,
    channels: Vec<usize>,
}

impl ConvNextLike {
    pub fn new(ps: &mut ParamStore, name: &str, cin: usize, channels: &[usize], depths: &[usize]) -> Result<Self> {
        if depths.len() != channels.len() {
            return Err(Error::Config(format!(
                "{} depths for {} levels",
                depths.len(),
                channels.len()
            )));
        }
        let stem = (
            Conv2d::new(ps, &format!("{name}.stem"), cin, channels[0], STEM_STRIDE, STEM_STRIDE, 0)?,
            ChannelNorm::new(ps, &format!("{name}.stem_norm"), channels[0])?,
        );
        let mut downs = Vec::new();
        let mut stages = Vec::new();
        for (l, (&c, &d)) in channels.iter().zip(depths).enumerate() {
            if l > 0 {
                downs.push((
                    ChannelNorm::new(ps, &format!("{name}.down{l}.norm"), channels[l - 1])?,
                    Conv2d::new(ps, &format!("{name}.down{l}.conv"), channels[l - 1], c, 2, 2, 0)?,
                ));
            }
            stages.push(
                (0..d)
                    .map(|b| ConvNextBlock::new(ps, &format!("{name}.s{l}.b{b}"), c))
                    .collect::<Result<_>>()?,
            );
        }
        Ok(Self {
            stem,
            downs,
            stages,
            channels: channels.to_vec(),
        })
    }
}

impl Backbone for ConvNextLike {
    fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut h = self.stem.1.forward(&self.stem.0.forward(x)?)?;
        let mut out = Vec::with_capacity(self.stages.len());
        for (l, blocks) in self.stages.iter().enumerate() {
            if l > 0 {
                let (norm, conv) = &self.downs[l - 1];
                h = conv.forward(&norm.forward(&h)?)?;
            }
            for b in blocks {
                h = b.forward(&h)?;
            }
            out.push(h.clone());
        }
        Ok(out)
    }

    fn channels(&self) -> &[usize] {
        &self.channels
    }
}
