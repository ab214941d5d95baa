//! Named trainable parameters with deterministic, name-keyed initialization.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Uniform(f64),
    Const(f64),
}

/// Every parameter draws from its own generator seeded by `(seed, name)`, so
/// a parameter's initial value does not depend on which other parameters a
/// model happens to create.
pub struct ParamStore {
    seed: u64,
    dtype: DType,
    device: Device,
    vars: BTreeMap<String, Var>,
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType, device: Device) -> Self {
        Self {
            seed,
            dtype,
            device,
            vars: BTreeMap::new(),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn rng_for(&self, name: &str) -> ChaCha8Rng {
        let digest = Sha256::digest(name.as_bytes());
        let salt = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        ChaCha8Rng::seed_from_u64(self.seed ^ salt)
    }

    /// Creates parameter `name`; names must be unique.
    pub fn create(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        if self.vars.contains_key(name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter {name}")));
        }
        let n: usize = shape.iter().product();
        let values: Vec<f64> = match init {
            Init::Const(v) => vec![v; n],
            Init::Uniform(bound) => {
                let mut rng = self.rng_for(name);
                (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
            }
        };
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(out)
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    /// Parameters in name order.
    pub fn named(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Overwrites the value of an existing parameter.
    pub fn set(&self, name: &str, value: &Tensor) -> Result<()> {
        let var = self
            .vars
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
        if var.dims() != value.dims() {
            return Err(Error::Checkpoint(format!(
                "parameter {name} has shape {:?}, got {:?}",
                var.dims(),
                value.dims()
            )));
        }
        var.set(&value.to_dtype(self.dtype)?.to_device(&self.device)?)?;
        Ok(())
    }

    /// Copies every parameter whose name also exists in `other`; returns how
    /// many were copied.
    pub fn copy_matching(&self, other: &ParamStore) -> Result<usize> {
        let mut copied = 0;
        for name in self.vars.keys() {
            if let Some(src) = other.vars.get(name) {
                self.set(name, src.as_tensor())?;
                copied += 1;
            }
        }
        Ok(copied)
    }
}
