use candle_core::Tensor;

use super::layers::Conv2d;
use super::params::ParamStore;
use crate::error::Result;
use crate::ops;
use crate::shape_err;

/// `alpha = sigmoid(conv1x1(relu(conv3x3([K, I]))))`,
/// `F = alpha * I + (1 - alpha) * K`.
pub struct GatedFusion {
    pub spatial: Conv2d,
    pub gate: Conv2d,
}

impl GatedFusion {
    pub fn new(ps: &mut ParamStore, name: &str, c: usize) -> Result<Self> {
        Ok(Self {
            spatial: Conv2d::same3(ps, &format!("{name}.spatial"), 2 * c, c)?,
            gate: Conv2d::pointwise(ps, &format!("{name}.gate"), c, c)?,
        })
    }

    pub fn gate_map(&self, image: &Tensor, climate: &Tensor) -> Result<Tensor> {
        if image.dims() != climate.dims() {
            return Err(shape_err!("fusion inputs {:?} vs {:?}", image.dims(), climate.dims()));
        }
        let z = Tensor::cat(&[climate, image], 1)?;
        ops::sigmoid(&self.gate.forward(&self.spatial.forward(&z)?.relu()?)?)
    }

    /// Fused features and the gate that produced them.
    pub fn forward(&self, image: &Tensor, climate: &Tensor) -> Result<(Tensor, Tensor)> {
        let alpha = self.gate_map(image, climate)?;
        let fused = ((&alpha * image)? + ((1.0 - &alpha)? * climate)?)?;
        Ok((fused, alpha))
    }
}
