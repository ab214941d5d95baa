use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::Result;
use crate::ops;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay, applied to parameters with two or more axes only.
    pub weight_decay: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            max_grad_norm: Some(1.0),
        }
    }
}

/// Adam with decoupled weight decay; moments are keyed by parameter name.
#[derive(Clone)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    pub step: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig) -> Self {
        Self {
            cfg,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Global L2 norm of all parameter gradients present in `grads`.
    pub fn grad_norm(params: &ParamStore, grads: &GradStore) -> Result<f64> {
        let mut sq = 0.0;
        for (_, var) in params.named() {
            if let Some(g) = grads.get(var.as_tensor()) {
                sq += ops::scalar(&g.sqr()?.sum_all()?)?;
            }
        }
        Ok(sq.sqrt())
    }

    /// One update at learning rate `lr`; returns the pre-clip gradient norm.
    pub fn update(&mut self, params: &ParamStore, grads: &GradStore, lr: f64) -> Result<f64> {
        let norm = Self::grad_norm(params, grads)?;
        let scale = match self.cfg.max_grad_norm {
            Some(max) if norm > max && norm > 0.0 => max / norm,
            _ => 1.0,
        };
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (name, var) in params.named() {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            let g = (g.detach() * scale)?;
            let theta = var.as_tensor().detach();
            let m_prev = match self.m.get(name) {
                Some(m) => m.clone(),
                None => theta.zeros_like()?,
            };
            let v_prev = match self.v.get(name) {
                Some(v) => v.clone(),
                None => theta.zeros_like()?,
            };
            let m = ((m_prev * b1)? + (&g * (1.0 - b1))?)?;
            let v = ((v_prev * b2)? + (g.sqr()? * (1.0 - b2))?)?;
            let step = ((&m / c1)? / ((&v / c2)?.sqrt()? + self.cfg.eps)?)?;
            let mut next = (theta.clone() - (step * lr)?)?;
            if self.cfg.weight_decay > 0.0 && theta.rank() >= 2 {
                next = (next - (theta * (lr * self.cfg.weight_decay))?)?;
            }
            var.set(&next)?;
            self.m.insert(name.to_string(), m);
            self.v.insert(name.to_string(), v);
        }
        Ok(norm)
    }
}

/// Linear warmup to `max_lr` over the first `warmup_fraction` of steps, then
/// cosine decay to 0 at the final step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub max_lr: f64,
    pub total_steps: usize,
    pub warmup_steps: usize,
}

impl LrSchedule {
    pub fn new(max_lr: f64, total_steps: usize, warmup_fraction: f64) -> Self {
        let warmup_steps = ((warmup_fraction * total_steps as f64).round() as usize).clamp(1, total_steps.max(1));
        Self {
            max_lr,
            total_steps,
            warmup_steps,
        }
    }

    /// Rate for the 0-based `step`.
    pub fn lr(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.max_lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps);
        if span == 0 {
            return self.max_lr;
        }
        let progress = ((step + 1 - self.warmup_steps) as f64 / span as f64).min(1.0);
        self.max_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}
