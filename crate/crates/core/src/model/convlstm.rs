use candle_core::Tensor;

use super::layers::Conv2d;
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::ops;

/// Convolutional LSTM with 3×3 gates and zero initial state.
pub struct ConvLstmCell {
    gates: Conv2d,
    hidden: usize,
}

impl ConvLstmCell {
    pub fn new(ps: &mut ParamStore, name: &str, cin: usize, hidden: usize) -> Result<Self> {
        let gates = Conv2d::same3(ps, &format!("{name}.gates"), cin + hidden, 4 * hidden)?;
        // Forget-gate bias starts at 1, the others at 0.
        let bias: Vec<f64> = (0..4 * hidden).map(|i| if (hidden..2 * hidden).contains(&i) { 1.0 } else { 0.0 }).collect();
        let bias = Tensor::from_vec(bias, 4 * hidden, ps.device())?;
        ps.set(&format!("{name}.gates.bias"), &bias)?;
        Ok(Self { gates, hidden })
    }

    /// One step; returns the new `(h, c)`.
    pub fn step(&self, x: &Tensor, h: &Tensor, c: &Tensor) -> Result<(Tensor, Tensor)> {
        let g = self.gates.forward(&Tensor::cat(&[x, h], 1)?)?;
        let chunks = g.chunk(4, 1)?;
        let i = ops::sigmoid(&chunks[0])?;
        let f = ops::sigmoid(&chunks[1])?;
        let o = ops::sigmoid(&chunks[2])?;
        let cand = chunks[3].tanh()?;
        let c = ((f * c)? + (i * cand)?)?;
        let h = (o * c.tanh()?)?;
        Ok((h, c))
    }

    /// Scans `[B, T, C, H, W]` in time order; returns the last hidden state
    /// and the hidden state after every step.
    pub fn run(&self, seq: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (b, t, _, h, w) = seq.dims5()?;
        if t == 0 {
            return Err(Error::InvalidArgument("empty sequence".into()));
        }
        let mut hs = Tensor::zeros((b, self.hidden, h, w), seq.dtype(), seq.device())?;
        let mut cs = hs.clone();
        let mut trace = Vec::with_capacity(t);
        for step in 0..t {
            let x = seq.narrow(1, step, 1)?.squeeze(1)?;
            (hs, cs) = self.step(&x, &hs, &cs)?;
            trace.push(hs.clone());
        }
        Ok((hs, trace))
    }
}
