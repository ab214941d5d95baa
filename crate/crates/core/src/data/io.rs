//! On-disk sample format and dataset manifest.
//!
//! A sample is a directory:
//!
//! ```text
//! <sample>/
//!   meta.json            shapes, dtypes, dates, sensor, region, split, threshold, checksums
//!   scene.safetensors    images F32[T,C,H,W], valid U8[T,H,W]
//!   future.safetensors   same layout as scene
//!   targets.safetensors  target F64[H,W], target_valid U8, change U8, direction U8,
//!                        magnitude F64, magnitude_valid U8
//!   climate.safetensors  windows F32[T,T1,C1]   (optional)
//!   dem.safetensors      elevation F32[H,W]     (optional)
//! ```
//!
//! `meta.json` records the SHA-256 of every container; loading verifies them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use ndarray::{Array2, Array3, Array4};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ClimateWindowSet, DemGrid, SampleRecord, SceneSeries, Sensor, Split};
use crate::error::{Error, Result};
use crate::raster::{Grid2D, TargetPack};
use crate::tensorfile::{self, RawArray};

pub const FORMAT_VERSION: u32 = 1;
pub const META_FILE: &str = "meta.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SeriesMeta {
    shape: [usize; 4],
    dtype: String,
    dates: Vec<NaiveDate>,
    imputed: Vec<bool>,
    sensor: Sensor,
    region: String,
    basin_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClimateMeta {
    shape: [usize; 3],
    variable_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SampleMeta {
    format_version: u32,
    id: String,
    split: Split,
    threshold: f64,
    scene: SeriesMeta,
    future: SeriesMeta,
    climate: Option<ClimateMeta>,
    dem: Option<[usize; 2]>,
    targets: [usize; 2],
    checksums: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn series_arrays(s: &SceneSeries) -> BTreeMap<String, RawArray> {
    let (t, c, h, w) = s.images.dim();
    BTreeMap::from([
        ("images".to_string(), RawArray::from_f32(&[t, c, h, w], s.images.iter().copied())),
        ("valid".to_string(), RawArray::from_bool(&[t, h, w], s.valid.iter().copied())),
    ])
}

fn series_meta(s: &SceneSeries) -> SeriesMeta {
    let (t, c, h, w) = s.images.dim();
    SeriesMeta {
        shape: [t, c, h, w],
        dtype: "F32".into(),
        dates: s.dates.clone(),
        imputed: s.imputed.clone(),
        sensor: s.sensor,
        region: s.region.clone(),
        basin_id: s.basin_id.clone(),
    }
}

/// Writes `record` into `dir` (created if needed).
pub fn save_sample(record: &SampleRecord, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut containers: Vec<(&str, BTreeMap<String, RawArray>)> = vec![
        ("scene", series_arrays(&record.scene)),
        ("future", series_arrays(&record.future)),
    ];
    let tp = &record.targets;
    let (h, w) = tp.dim();
    containers.push((
        "targets",
        BTreeMap::from([
            ("target".into(), RawArray::from_f64(&[h, w], tp.target.values.iter().copied())),
            ("target_valid".into(), RawArray::from_bool(&[h, w], tp.target.valid.iter().copied())),
            ("change".into(), RawArray::from_u8(&[h, w], tp.change_mask.iter().copied())),
            ("direction".into(), RawArray::from_u8(&[h, w], tp.direction_mask.iter().copied())),
            ("magnitude".into(), RawArray::from_f64(&[h, w], tp.magnitude.values.iter().copied())),
            ("magnitude_valid".into(), RawArray::from_bool(&[h, w], tp.magnitude.valid.iter().copied())),
        ]),
    ));
    if let Some(c) = &record.climate {
        let (t, t1, c1) = c.windows.dim();
        containers.push((
            "climate",
            BTreeMap::from([("windows".into(), RawArray::from_f32(&[t, t1, c1], c.windows.iter().copied()))]),
        ));
    }
    if let Some(d) = &record.dem {
        let (h, w) = d.elevation.dim();
        containers.push((
            "dem",
            BTreeMap::from([("elevation".into(), RawArray::from_f32(&[h, w], d.elevation.iter().copied()))]),
        ));
    }

    let mut checksums = BTreeMap::new();
    for (name, arrays) in &containers {
        let bytes = tensorfile::to_bytes(arrays, None)?;
        checksums.insert(name.to_string(), sha256_hex(&bytes));
        std::fs::write(dir.join(format!("{name}.safetensors")), bytes)?;
    }
    for stale in ["climate", "dem"] {
        let p = dir.join(format!("{stale}.safetensors"));
        if !checksums.contains_key(stale) && p.exists() {
            std::fs::remove_file(p)?;
        }
    }

    let meta = SampleMeta {
        format_version: FORMAT_VERSION,
        id: record.id.clone(),
        split: record.split,
        threshold: tp.threshold,
        scene: series_meta(&record.scene),
        future: series_meta(&record.future),
        climate: record.climate.as_ref().map(|c| {
            let (t, t1, c1) = c.windows.dim();
            ClimateMeta {
                shape: [t, t1, c1],
                variable_names: c.variable_names.clone(),
            }
        }),
        dem: record.dem.as_ref().map(|d| {
            let (h, w) = d.elevation.dim();
            [h, w]
        }),
        targets: [h, w],
        checksums,
    };
    std::fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

struct Loader<'a> {
    dir: &'a Path,
    meta: &'a SampleMeta,
}

impl Loader<'_> {
    fn corrupt(&self, field: impl Into<String>) -> Error {
        Error::CorruptField {
            path: self.dir.to_path_buf(),
            field: field.into(),
        }
    }

    fn container(&self, name: &str) -> Result<BTreeMap<String, RawArray>> {
        let path = self.dir.join(format!("{name}.safetensors"));
        let bytes = std::fs::read(&path).map_err(|_| self.corrupt(name))?;
        let expected = self.meta.checksums.get(name).ok_or_else(|| self.corrupt(format!("checksums.{name}")))?;
        if &sha256_hex(&bytes) != expected {
            return Err(Error::Checksum {
                path: self.dir.to_path_buf(),
                field: name.to_string(),
            });
        }
        Ok(tensorfile::from_bytes(&bytes, &path)?.arrays)
    }

    fn array<'m>(&self, arrays: &'m BTreeMap<String, RawArray>, container: &str, name: &str, shape: &[usize]) -> Result<&'m RawArray> {
        let field = format!("{container}.{name}");
        let a = arrays.get(name).ok_or_else(|| self.corrupt(&field))?;
        if a.shape != shape {
            return Err(self.corrupt(field));
        }
        Ok(a)
    }

    fn f32s(&self, arrays: &BTreeMap<String, RawArray>, container: &str, name: &str, shape: &[usize]) -> Result<Vec<f32>> {
        self.array(arrays, container, name, shape)?
            .to_f32()
            .ok_or_else(|| self.corrupt(format!("{container}.{name}")))
    }

    fn f64s(&self, arrays: &BTreeMap<String, RawArray>, container: &str, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        self.array(arrays, container, name, shape)?
            .to_f64()
            .ok_or_else(|| self.corrupt(format!("{container}.{name}")))
    }

    fn u8s(&self, arrays: &BTreeMap<String, RawArray>, container: &str, name: &str, shape: &[usize]) -> Result<Vec<u8>> {
        self.array(arrays, container, name, shape)?
            .to_u8()
            .ok_or_else(|| self.corrupt(format!("{container}.{name}")))
    }

    fn bools(&self, arrays: &BTreeMap<String, RawArray>, container: &str, name: &str, shape: &[usize]) -> Result<Vec<bool>> {
        Ok(self.u8s(arrays, container, name, shape)?.into_iter().map(|b| b != 0).collect())
    }

    fn series(&self, name: &str, meta: &SeriesMeta) -> Result<SceneSeries> {
        let arrays = self.container(name)?;
        let [t, c, h, w] = meta.shape;
        let images = Array4::from_shape_vec((t, c, h, w), self.f32s(&arrays, name, "images", &meta.shape)?)
            .map_err(|_| self.corrupt(format!("{name}.images")))?;
        let valid = Array3::from_shape_vec((t, h, w), self.bools(&arrays, name, "valid", &[t, h, w])?)
            .map_err(|_| self.corrupt(format!("{name}.valid")))?;
        SceneSeries::new(
            images,
            valid,
            meta.imputed.clone(),
            meta.dates.clone(),
            meta.sensor,
            meta.region.clone(),
            meta.basin_id.clone(),
        )
        .map_err(|_| self.corrupt(name))
    }

    fn grid2<T>(&self, values: Vec<T>, field: &str) -> Result<Array2<T>> {
        let [h, w] = self.meta.targets;
        Array2::from_shape_vec((h, w), values).map_err(|_| self.corrupt(field))
    }
}

/// Reads a sample directory written by [`save_sample`].
pub fn load_sample(dir: &Path) -> Result<SampleRecord> {
    let meta_path = dir.join(META_FILE);
    let corrupt = |field: &str| Error::CorruptField {
        path: dir.to_path_buf(),
        field: field.to_string(),
    };
    let text = std::fs::read_to_string(&meta_path).map_err(|_| corrupt("meta"))?;
    let meta: SampleMeta = serde_json::from_str(&text).map_err(|_| corrupt("meta"))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(corrupt("format_version"));
    }
    let l = Loader { dir, meta: &meta };
    let scene = l.series("scene", &meta.scene)?;
    let future = l.series("future", &meta.future)?;

    let shape = meta.targets;
    let arrays = l.container("targets")?;
    let target = Grid2D {
        values: l.grid2(l.f64s(&arrays, "targets", "target", &shape)?, "targets.target")?,
        valid: l.grid2(l.bools(&arrays, "targets", "target_valid", &shape)?, "targets.target_valid")?,
    };
    let magnitude = Grid2D {
        values: l.grid2(l.f64s(&arrays, "targets", "magnitude", &shape)?, "targets.magnitude")?,
        valid: l.grid2(l.bools(&arrays, "targets", "magnitude_valid", &shape)?, "targets.magnitude_valid")?,
    };
    let targets = TargetPack {
        target,
        change_mask: l.grid2(l.u8s(&arrays, "targets", "change", &shape)?, "targets.change")?,
        direction_mask: l.grid2(l.u8s(&arrays, "targets", "direction", &shape)?, "targets.direction")?,
        magnitude,
        threshold: meta.threshold,
    };

    let climate = match &meta.climate {
        Some(cm) => {
            let arrays = l.container("climate")?;
            let [t, t1, c1] = cm.shape;
            let windows = Array3::from_shape_vec((t, t1, c1), l.f32s(&arrays, "climate", "windows", &cm.shape)?)
                .map_err(|_| corrupt("climate.windows"))?;
            Some(ClimateWindowSet {
                windows,
                variable_names: cm.variable_names.clone(),
            })
        }
        None => None,
    };
    let dem = match meta.dem {
        Some(shape) => {
            let arrays = l.container("dem")?;
            let elevation = Array2::from_shape_vec((shape[0], shape[1]), l.f32s(&arrays, "dem", "elevation", &shape)?)
                .map_err(|_| corrupt("dem.elevation"))?;
            Some(DemGrid { elevation })
        }
        None => None,
    };
    if super::split_assign(scene.sensor, &scene.region)? != meta.split {
        return Err(corrupt("split"));
    }
    Ok(SampleRecord {
        id: meta.id.clone(),
        scene,
        future,
        climate,
        dem,
        targets,
        split: meta.split,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Sample directory, relative to the manifest.
    pub path: PathBuf,
    pub split: Split,
}

/// Dataset listing: sample directories and their splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub samples: Vec<ManifestEntry>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            samples: Vec::new(),
            root: root.into(),
        }
    }

    /// Accepts either the manifest file or the directory containing it.
    pub fn load(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&file).map_err(|_| Error::CorruptField {
            path: file.clone(),
            field: "manifest".into(),
        })?;
        let mut m: Manifest = serde_json::from_str(&text).map_err(|_| Error::CorruptField {
            path: file.clone(),
            field: "manifest".into(),
        })?;
        m.root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn save(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.root)?;
        let file = self.root.join(MANIFEST_FILE);
        std::fs::write(&file, serde_json::to_string_pretty(self)?)?;
        Ok(file)
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.samples.iter().filter(move |e| e.split == split)
    }

    pub fn sample_dir(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<SampleRecord>> {
        self.entries(split).map(|e| load_sample(&self.sample_dir(e))).collect()
    }
}
