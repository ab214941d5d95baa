//! Sample assembly: sensor band harmonization, completeness filtering,
//! zero-imputation, climate windowing, standardization and splits, plus the
//! synthetic scene generator and on-disk sample format.

pub mod augment;
pub mod bands;
pub mod climate;
pub mod io;
pub mod series;
pub mod split;
pub mod standardize;
pub mod synthetic;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use ndarray::{Array2, Array3, Array4, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{compute_mndwi, Grid2D, GridStack, TargetPack};
use crate::shape_err;

pub use bands::{harmonize_bands, BAND_NAMES, GREEN, SWIR1};
pub use climate::{select_climate_vars, window_climate, MonthlyClimate, YearMonth};
pub use series::{filter_completeness, impute_series, SparseSeries};
pub use split::split_assign;
pub use standardize::{standardize, NormStats};
pub use synthetic::{generate_synthetic_scene, Dynamics, SyntheticConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Sensor {
    Landsat5,
    Sentinel2,
}

impl fmt::Display for Sensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sensor::Landsat5 => "LANDSAT5",
            Sensor::Sentinel2 => "SENTINEL2",
        })
    }
}

impl FromStr for Sensor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LANDSAT5" | "L5" => Ok(Sensor::Landsat5),
            "SENTINEL2" | "S2" => Ok(Sensor::Sentinel2),
            _ => Err(Error::InvalidArgument(format!("unknown sensor {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Split {
    Pretrain,
    Finetune,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Pretrain => "PRETRAIN",
            Split::Finetune => "FINETUNE",
            Split::Test => "TEST",
        })
    }
}

/// Image time series of harmonized 6-band reflectance.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSeries {
    /// `T x C x H x W` reflectance.
    pub images: Array4<f32>,
    /// `T x H x W` validity (cloud) mask.
    pub valid: Array3<bool>,
    /// Frames filled in by zero-imputation; excluded from target construction.
    pub imputed: Vec<bool>,
    pub dates: Vec<NaiveDate>,
    pub sensor: Sensor,
    pub region: String,
    pub basin_id: String,
}

impl SceneSeries {
    pub fn new(
        images: Array4<f32>,
        valid: Array3<bool>,
        imputed: Vec<bool>,
        dates: Vec<NaiveDate>,
        sensor: Sensor,
        region: impl Into<String>,
        basin_id: impl Into<String>,
    ) -> Result<Self> {
        let (t, c, h, w) = images.dim();
        if c != BAND_NAMES.len() {
            return Err(shape_err!("expected {} bands, got {c}", BAND_NAMES.len()));
        }
        if valid.dim() != (t, h, w) {
            return Err(shape_err!("valid mask {:?} vs images {:?}", valid.dim(), (t, h, w)));
        }
        if imputed.len() != t || dates.len() != t {
            return Err(shape_err!("series length {t} vs {} flags / {} dates", imputed.len(), dates.len()));
        }
        if dates.windows(2).any(|d| d[0] >= d[1]) {
            return Err(Error::InvalidArgument("dates must be strictly increasing".into()));
        }
        Ok(Self {
            images,
            valid,
            imputed,
            dates,
            sensor,
            region: region.into(),
            basin_id: basin_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.images.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(H, W)`.
    pub fn spatial_dim(&self) -> (usize, usize) {
        let (_, _, h, w) = self.images.dim();
        (h, w)
    }

    pub fn band(&self, frame: usize, band: usize) -> Grid2D {
        let values = self
            .images
            .index_axis(Axis(0), frame)
            .index_axis(Axis(0), band)
            .mapv(f64::from);
        let valid = self.valid.index_axis(Axis(0), frame).to_owned();
        Grid2D { values, valid }
    }

    pub fn mndwi_frame(&self, frame: usize) -> Result<Grid2D> {
        compute_mndwi(&self.band(frame, GREEN), &self.band(frame, SWIR1))
    }

    /// MNDWI stack over the non-imputed frames only.
    pub fn mndwi_stack(&self) -> Result<GridStack> {
        let mut frames = Vec::new();
        let mut dates = Vec::new();
        for i in (0..self.len()).filter(|i| !self.imputed[*i]) {
            frames.push(self.mndwi_frame(i)?);
            dates.push(self.dates[i]);
        }
        GridStack::new(frames, dates)
    }

    pub fn present_frames(&self) -> usize {
        self.imputed.iter().filter(|i| !**i).count()
    }
}

/// Monthly climate windows, `T x T1 x C1`, one window per image.
#[derive(Debug, Clone, PartialEq)]
pub struct ClimateWindowSet {
    pub windows: Array3<f32>,
    pub variable_names: Vec<String>,
}

/// Static elevation in meters, `H x W`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemGrid {
    pub elevation: Array2<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    /// Past series `P`, the model input.
    pub scene: SceneSeries,
    /// Future series `F`, used only to build labels.
    pub future: SceneSeries,
    pub climate: Option<ClimateWindowSet>,
    pub dem: Option<DemGrid>,
    pub targets: TargetPack,
    pub split: Split,
}

impl SampleRecord {
    pub fn assemble(
        id: impl Into<String>,
        scene: SceneSeries,
        future: SceneSeries,
        climate: Option<ClimateWindowSet>,
        dem: Option<DemGrid>,
        threshold: f64,
    ) -> Result<Self> {
        let dim = scene.spatial_dim();
        if future.spatial_dim() != dim {
            return Err(shape_err!("future footprint {:?} vs {:?}", future.spatial_dim(), dim));
        }
        if let Some(c) = &climate {
            if c.windows.dim().0 != scene.len() {
                return Err(shape_err!("{} climate windows for {} images", c.windows.dim().0, scene.len()));
            }
        }
        if let Some(d) = &dem {
            if d.elevation.dim() != dim {
                return Err(shape_err!("dem {:?} vs scene {:?}", d.elevation.dim(), dim));
            }
        }
        let targets = TargetPack::build(&scene.mndwi_stack()?, &future.mndwi_stack()?, threshold)?;
        let split = split_assign(scene.sensor, &scene.region)?;
        Ok(Self {
            id: id.into(),
            scene,
            future,
            climate,
            dem,
            targets,
            split,
        })
    }
}

/// Standardized model inputs for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    /// `T x C x H x W`, invalid pixels set to zero.
    pub images: Array4<f32>,
    pub dem: Option<Array2<f32>>,
    /// `T x T1 x C1`.
    pub climate: Option<Array3<f32>>,
}

impl ModelInput {
    pub fn spatial_dim(&self) -> (usize, usize) {
        let (_, _, h, w) = self.images.dim();
        (h, w)
    }
}
