//! Thin typed layer over safetensors containers.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use safetensors::tensor::{Dtype, SafeTensors, View};

use crate::error::{Error, Result};

/// An owned little-endian array ready for serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawArray {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub bytes: Vec<u8>,
}

impl View for &RawArray {
    fn dtype(&self) -> Dtype {
        self.dtype
    }

    fn shape(&self) -> &[usize] {
        &self.shape
    }

    fn data(&self) -> Cow<'_, [u8]> {
        Cow::Borrowed(&self.bytes)
    }

    fn data_len(&self) -> usize {
        self.bytes.len()
    }
}

impl RawArray {
    pub fn from_f32(shape: &[usize], values: impl IntoIterator<Item = f32>) -> Self {
        Self {
            dtype: Dtype::F32,
            shape: shape.to_vec(),
            bytes: values.into_iter().flat_map(f32::to_le_bytes).collect(),
        }
    }

    pub fn from_f64(shape: &[usize], values: impl IntoIterator<Item = f64>) -> Self {
        Self {
            dtype: Dtype::F64,
            shape: shape.to_vec(),
            bytes: values.into_iter().flat_map(f64::to_le_bytes).collect(),
        }
    }

    pub fn from_u8(shape: &[usize], values: impl IntoIterator<Item = u8>) -> Self {
        Self {
            dtype: Dtype::U8,
            shape: shape.to_vec(),
            bytes: values.into_iter().collect(),
        }
    }

    pub fn from_bool(shape: &[usize], values: impl IntoIterator<Item = bool>) -> Self {
        Self::from_u8(shape, values.into_iter().map(u8::from))
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f32(&self) -> Option<Vec<f32>> {
        (self.dtype == Dtype::F32).then(|| {
            self.bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect()
        })
    }

    pub fn to_f64(&self) -> Option<Vec<f64>> {
        (self.dtype == Dtype::F64).then(|| {
            self.bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        })
    }

    pub fn to_u8(&self) -> Option<Vec<u8>> {
        (self.dtype == Dtype::U8).then(|| self.bytes.clone())
    }

    pub fn to_bool(&self) -> Option<Vec<bool>> {
        self.to_u8().map(|v| v.into_iter().map(|b| b != 0).collect())
    }
}

/// Serializes `arrays` with an optional single metadata blob.
pub fn to_bytes(arrays: &BTreeMap<String, RawArray>, metadata: Option<String>) -> Result<Vec<u8>> {
    let info = metadata.map(|m| HashMap::from([("aqua".to_string(), m)]));
    safetensors::serialize(arrays.iter().map(|(k, v)| (k.as_str(), v)), info)
        .map_err(|e| Error::InvalidArgument(format!("serialize: {e}")))
}

pub fn write(path: &Path, arrays: &BTreeMap<String, RawArray>, metadata: Option<String>) -> Result<()> {
    std::fs::write(path, to_bytes(arrays, metadata)?)?;
    Ok(())
}

/// Parsed container: arrays by name plus the metadata blob, if any.
pub struct Container {
    pub arrays: BTreeMap<String, RawArray>,
    pub metadata: Option<String>,
}

pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Container> {
    let corrupt = |field: &str| Error::CorruptField {
        path: path.to_path_buf(),
        field: field.to_string(),
    };
    let (_, meta) = SafeTensors::read_metadata(bytes).map_err(|_| corrupt("header"))?;
    let metadata = meta.metadata().as_ref().and_then(|m| m.get("aqua").cloned());
    let st = SafeTensors::deserialize(bytes).map_err(|_| corrupt("header"))?;
    let arrays = st
        .tensors()
        .into_iter()
        .map(|(name, view)| {
            let raw = RawArray {
                dtype: view.dtype(),
                shape: view.shape().to_vec(),
                bytes: view.data().to_vec(),
            };
            (name, raw)
        })
        .collect();
    Ok(Container { arrays, metadata })
}

pub fn read(path: &Path) -> Result<Container> {
    let bytes = std::fs::read(path)?;
    from_bytes(&bytes, path)
}
