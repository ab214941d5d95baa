use candle_core::Tensor;

use super::backbone::STEM_STRIDE;
use super::layers::{gelu, ChannelNorm, Conv2d};
use super::params::ParamStore;
use crate::error::Result;
use crate::ops;

/// Conv, channel norm, GELU.
struct ConvBlock {
    conv: Conv2d,
    norm: ChannelNorm,
}

impl ConvBlock {
    fn new(ps: &mut ParamStore, name: &str, cin: usize, cout: usize) -> Result<Self> {
        Ok(Self {
            conv: Conv2d::same3(ps, name, cin, cout)?,
            norm: ChannelNorm::new(ps, &format!("{name}.norm"), cout)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        gelu(&self.norm.forward(&self.conv.forward(x)?)?)
    }
}

/// UNet expanding path over per-level summaries, then ×2 upsampling stages
/// back to input resolution and a 1×1 head.
pub struct Decoder {
    merges: Vec<(ConvBlock, ConvBlock)>,
    finals: Vec<ConvBlock>,
    head: Conv2d,
}

impl Decoder {
    pub fn new(ps: &mut ParamStore, name: &str, channels: &[usize], head_channels: usize, out: usize) -> Result<Self> {
        let mut merges = Vec::new();
        for l in (0..channels.len() - 1).rev() {
            let cin = channels[l + 1] + channels[l];
            merges.push((
                ConvBlock::new(ps, &format!("{name}.merge{l}.a"), cin, channels[l])?,
                ConvBlock::new(ps, &format!("{name}.merge{l}.b"), channels[l], channels[l])?,
            ));
        }
        let stages = STEM_STRIDE.trailing_zeros() as usize;
        let mut finals = Vec::new();
        let mut prev = channels[0];
        for s in 0..stages {
            finals.push(ConvBlock::new(ps, &format!("{name}.final{s}"), prev, head_channels)?);
            prev = head_channels;
        }
        let head = Conv2d::pointwise(ps, &format!("{name}.head"), prev, out)?;
        Ok(Self { merges, finals, head })
    }

    /// `levels[l]` is `[B, C_l, H_l, W_l]`; returns `[B, out, h, w]` logits
    /// or raw regression values.
    pub fn forward(&self, levels: &[Tensor], h: usize, w: usize) -> Result<Tensor> {
        let mut x = levels.last().expect("at least one level").clone();
        for ((a, b), skip) in self.merges.iter().zip(levels[..levels.len() - 1].iter().rev()) {
            let (_, _, sh, sw) = skip.dims4()?;
            let up = ops::resize_nearest(&x, sh, sw)?;
            x = b.forward(&a.forward(&Tensor::cat(&[&up, skip], 1)?)?)?;
        }
        for conv in &self.finals {
            let (_, _, xh, xw) = x.dims4()?;
            x = conv.forward(&x.upsample_nearest2d(2 * xh, 2 * xw)?)?;
        }
        let x = ops::resize_nearest(&x, h, w)?;
        self.head.forward(&x)
    }
}
