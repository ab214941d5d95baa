use candle_core::{Tensor, D};

use super::params::{Init, ParamStore};
use crate::error::Result;
use crate::ops;

pub fn gelu(x: &Tensor) -> Result<Tensor> {
    Ok(x.gelu_erf()?)
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    stride: usize,
    padding: usize,
    groups: usize,
}

impl Conv2d {
    pub fn new(ps: &mut ParamStore, name: &str, cin: usize, cout: usize, k: usize, stride: usize, padding: usize) -> Result<Self> {
        Self::grouped(ps, name, cin, cout, k, stride, padding, 1)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn grouped(
        ps: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Self> {
        let fan_in = (cin / groups * k * k) as f64;
        let bound = 1.0 / fan_in.sqrt();
        Ok(Self {
            weight: ps.create(&format!("{name}.weight"), &[cout, cin / groups, k, k], Init::Uniform(bound))?,
            bias: ps.create(&format!("{name}.bias"), &[cout], Init::Uniform(bound))?,
            stride,
            padding,
            groups,
        })
    }

    /// "Same" 3×3 convolution.
    pub fn same3(ps: &mut ParamStore, name: &str, cin: usize, cout: usize) -> Result<Self> {
        Self::new(ps, name, cin, cout, 3, 1, 1)
    }

    pub fn pointwise(ps: &mut ParamStore, name: &str, cin: usize, cout: usize) -> Result<Self> {
        Self::new(ps, name, cin, cout, 1, 1, 0)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, self.groups)?;
        Ok(y.broadcast_add(&self.bias.reshape((1, (), 1, 1))?)?)
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(ps: &mut ParamStore, name: &str, din: usize, dout: usize) -> Result<Self> {
        let bound = 1.0 / (din as f64).sqrt();
        Ok(Self {
            weight: ps.create(&format!("{name}.weight"), &[dout, din], Init::Uniform(bound))?,
            bias: ps.create(&format!("{name}.bias"), &[dout], Init::Uniform(bound))?,
        })
    }

    /// `[B, din] -> [B, dout]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(&self.weight.t()?)?.broadcast_add(&self.bias)?)
    }
}

/// Layer norm over the channel axis of an NCHW tensor.
#[derive(Debug, Clone)]
pub struct ChannelNorm {
    gamma: Tensor,
    beta: Tensor,
}

impl ChannelNorm {
    pub fn new(ps: &mut ParamStore, name: &str, c: usize) -> Result<Self> {
        Ok(Self {
            gamma: ps.create(&format!("{name}.gamma"), &[c], Init::Const(1.0))?,
            beta: ps.create(&format!("{name}.beta"), &[c], Init::Const(0.0))?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(1)?;
        let normed = centered.broadcast_div(&(var + 1e-6)?.sqrt()?)?;
        let g = self.gamma.reshape((1, (), 1, 1))?;
        let b = self.beta.reshape((1, (), 1, 1))?;
        Ok(normed.broadcast_mul(&g)?.broadcast_add(&b)?)
    }
}

/// Single-layer LSTM over `[B, T, D]` sequences with zero initial state;
/// returns the final hidden state `[B, H]`.
#[derive(Debug, Clone)]
pub struct Lstm {
    input: Linear,
    hidden: Linear,
    size: usize,
}

impl Lstm {
    pub fn new(ps: &mut ParamStore, name: &str, din: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            input: Linear::new(ps, &format!("{name}.ih"), din, 4 * hidden)?,
            hidden: Linear::new(ps, &format!("{name}.hh"), hidden, 4 * hidden)?,
            size: hidden,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.size
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, _) = x.dims3()?;
        let mut h = Tensor::zeros((b, self.size), x.dtype(), x.device())?;
        let mut c = h.clone();
        // Input projections for all steps at once.
        let xin = self.input.forward(&x.reshape((b * t, ()))?)?.reshape((b, t, 4 * self.size))?;
        for step in 0..t {
            let gates = (xin.narrow(1, step, 1)?.squeeze(1)? + self.hidden.forward(&h)?)?;
            let chunks = gates.chunk(4, D::Minus1)?;
            let (i, f, g, o) = (
                ops::sigmoid(&chunks[0])?,
                ops::sigmoid(&chunks[1])?,
                chunks[2].tanh()?,
                ops::sigmoid(&chunks[3])?,
            );
            c = ((f * &c)? + (i * g)?)?;
            h = (o * c.tanh()?)?;
        }
        Ok(h)
    }
}
