//! Single-file checkpoints: named parameters, optional optimizer moments,
//! and a JSON header echoing the model config.

use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use safetensors::Dtype;
use serde::{Deserialize, Serialize};

use super::optim::{AdamW, AdamWConfig};
use super::{Actu, ModelConfig};
use crate::error::{Error, Result};
use crate::tensorfile::{self, RawArray};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub model: ModelConfig,
    /// Optimizer config and step count, when moments are stored.
    pub optimizer: Option<(AdamWConfig, u64)>,
    /// Free-form training context (epoch, normalization stats, ...).
    #[serde(default)]
    pub extra: serde_json::Value,
}

fn raw(t: &Tensor) -> Result<RawArray> {
    let shape = t.dims().to_vec();
    Ok(match t.dtype() {
        DType::F64 => RawArray::from_f64(&shape, t.flatten_all()?.to_vec1::<f64>()?),
        _ => RawArray::from_f32(&shape, t.flatten_all()?.to_dtype(DType::F32)?.to_vec1::<f32>()?),
    })
}

fn tensor(a: &RawArray, device: &Device, path: &Path, name: &str) -> Result<Tensor> {
    let corrupt = || Error::CorruptField {
        path: path.to_path_buf(),
        field: name.to_string(),
    };
    Ok(match a.dtype {
        Dtype::F64 => Tensor::from_vec(a.to_f64().ok_or_else(corrupt)?, a.shape.as_slice(), device)?,
        Dtype::F32 => Tensor::from_vec(a.to_f32().ok_or_else(corrupt)?, a.shape.as_slice(), device)?,
        _ => return Err(corrupt()),
    })
}

pub fn save_checkpoint(path: &Path, model: &Actu, optimizer: Option<&AdamW>, extra: serde_json::Value) -> Result<()> {
    let mut arrays = BTreeMap::new();
    for (name, var) in model.params().named() {
        arrays.insert(format!("param.{name}"), raw(var.as_tensor())?);
    }
    if let Some(opt) = optimizer {
        for (name, m) in &opt.m {
            arrays.insert(format!("optim.m.{name}"), raw(m)?);
        }
        for (name, v) in &opt.v {
            arrays.insert(format!("optim.v.{name}"), raw(v)?);
        }
    }
    let meta = CheckpointMeta {
        version: CHECKPOINT_VERSION,
        model: model.config().clone(),
        optimizer: optimizer.map(|o| (o.cfg.clone(), o.step)),
        extra,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    tensorfile::write(path, &arrays, Some(serde_json::to_string(&meta)?))
}

pub fn read_checkpoint_meta(path: &Path) -> Result<CheckpointMeta> {
    let c = tensorfile::read(path)?;
    parse_meta(c.metadata.as_deref(), path)
}

fn parse_meta(text: Option<&str>, path: &Path) -> Result<CheckpointMeta> {
    let text = text.ok_or_else(|| Error::CorruptField {
        path: path.to_path_buf(),
        field: "metadata".into(),
    })?;
    let meta: CheckpointMeta = serde_json::from_str(text).map_err(|_| Error::CorruptField {
        path: path.to_path_buf(),
        field: "metadata".into(),
    })?;
    if meta.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint version {} (expected {CHECKPOINT_VERSION})",
            meta.version
        )));
    }
    Ok(meta)
}

/// Restores a model (and optimizer state, when stored). With `expected`, a
/// config that differs from the stored one is rejected.
pub fn load_checkpoint(
    path: &Path,
    expected: Option<&ModelConfig>,
    dtype: DType,
    device: &Device,
) -> Result<(Actu, Option<AdamW>, CheckpointMeta)> {
    let c = tensorfile::read(path)?;
    let meta = parse_meta(c.metadata.as_deref(), path)?;
    if let Some(want) = expected {
        if want != &meta.model {
            return Err(Error::Checkpoint(format!(
                "config mismatch: checkpoint has {}, requested {}",
                serde_json::to_string(&meta.model)?,
                serde_json::to_string(want)?
            )));
        }
    }
    let model = Actu::new(meta.model.clone(), 0, dtype, device)?;
    let mut seen = 0;
    for (name, _) in model.params().named() {
        let key = format!("param.{name}");
        let a = c.arrays.get(&key).ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
        model.params().set(name, &tensor(a, device, path, &key)?)?;
        seen += 1;
    }
    let stored = c.arrays.keys().filter(|k| k.starts_with("param.")).count();
    if stored != seen {
        return Err(Error::Checkpoint(format!("{stored} stored parameters, model has {seen}")));
    }
    let optimizer = match &meta.optimizer {
        Some((cfg, step)) => {
            let mut opt = AdamW::new(cfg.clone());
            opt.step = *step;
            for (key, a) in &c.arrays {
                let t = || -> Result<Tensor> { Ok(tensor(a, device, path, key)?.to_dtype(dtype)?) };
                if let Some(name) = key.strip_prefix("optim.m.") {
                    opt.m.insert(name.to_string(), t()?);
                } else if let Some(name) = key.strip_prefix("optim.v.") {
                    opt.v.insert(name.to_string(), t()?);
                }
            }
            Some(opt)
        }
        None => None,
    };
    Ok((model, optimizer, meta))
}
