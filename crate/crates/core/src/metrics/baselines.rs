//! Constant and persistence baselines.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::SceneSeries;
use crate::error::{Error, Result};
use crate::raster::{change, median_in_place, Direction, Grid2D};
use crate::task::Task;

/// A per-pixel prediction: class labels or regressed values.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Classes(Array2<u8>),
    Values(Array2<f64>),
}

impl Prediction {
    pub fn dim(&self) -> (usize, usize) {
        match self {
            Prediction::Classes(a) => a.dim(),
            Prediction::Values(a) => a.dim(),
        }
    }
}

/// "Nothing changes": NoCHG, NONE, or zero magnitude everywhere.
pub fn constant_predict(task: Task, dim: (usize, usize)) -> Prediction {
    match task {
        Task::Change => Prediction::Classes(Array2::from_elem(dim, change::NO_CHANGE)),
        Task::Direction => Prediction::Classes(Array2::from_elem(dim, Direction::None as u8)),
        Task::Magnitude => Prediction::Values(Array2::zeros(dim)),
    }
}

/// How the sign of the persistence difference maps onto direction classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersistenceConvention {
    /// Classes follow the sign of `last - median(previous)` as is.
    Literal,
    /// Classes follow `-(last - median(previous))`, the sign of the
    /// `median(past) - median(future)` target it forecasts: a pixel that
    /// has been losing water predicts POS.
    #[default]
    TargetAligned,
}

/// `Δ = MNDWI(last) - median(MNDWI(previous))` per pixel, over non-imputed
/// frames where the pixel is valid. Pixels with fewer than two valid
/// observations are invalid.
pub fn persistence_delta(scene: &SceneSeries) -> Result<Grid2D> {
    let frames: Vec<Grid2D> = (0..scene.len())
        .filter(|&i| !scene.imputed[i])
        .map(|i| scene.mndwi_frame(i))
        .collect::<Result<_>>()?;
    if frames.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "persistence needs at least 2 non-imputed frames, got {}",
            frames.len()
        )));
    }
    let dim = frames[0].dim();
    let mut values = Array2::zeros(dim);
    let mut valid = Array2::from_elem(dim, false);
    let mut obs = Vec::with_capacity(frames.len());
    for ((r, c), out) in values.indexed_iter_mut() {
        obs.clear();
        obs.extend(frames.iter().filter(|f| f.valid[[r, c]]).map(|f| f.values[[r, c]]));
        if let Some((&last, previous)) = obs.split_last() {
            let mut previous = previous.to_vec();
            if let Some(m) = median_in_place(&mut previous) {
                *out = last - m;
                valid[[r, c]] = true;
            }
        }
    }
    Grid2D::new(values, valid)
}

/// Persistence forecast for a task from [`persistence_delta`]. Invalid
/// pixels predict no change.
pub fn persistence_predict(scene: &SceneSeries, task: Task, t: f64, convention: PersistenceConvention) -> Result<Prediction> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {t}")));
    }
    let delta = persistence_delta(scene)?;
    let signed = |v: f64| match convention {
        PersistenceConvention::Literal => v,
        PersistenceConvention::TargetAligned => -v,
    };
    let pick = |f: &dyn Fn(f64) -> u8, none: u8| {
        ndarray::Zip::from(&delta.values)
            .and(&delta.valid)
            .map_collect(|v, ok| if *ok { f(*v) } else { none })
    };
    Ok(match task {
        Task::Change => Prediction::Classes(pick(
            &|v| if v.abs() > t { change::CHANGE } else { change::NO_CHANGE },
            change::NO_CHANGE,
        )),
        Task::Direction => Prediction::Classes(pick(
            &|v| Direction::classify(signed(v), t) as u8,
            Direction::None as u8,
        )),
        Task::Magnitude => Prediction::Values(delta.values.mapv(f64::abs)),
    })
}
