use chrono::NaiveDate;
use ndarray::{s, Array2, Array3, Array4};

use super::{SceneSeries, Sensor, BAND_NAMES};
use crate::error::{Error, Result};
use crate::shape_err;

/// One observed frame: `C x H x W` reflectance and its validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub image: Array3<f32>,
    pub valid: Array2<bool>,
}

/// A series on its nominal yearly timestep grid, with gaps where no image of
/// sufficient quality exists.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSeries {
    pub slots: Vec<NaiveDate>,
    pub frames: Vec<Option<Frame>>,
    pub sensor: Sensor,
    pub region: String,
    pub basin_id: String,
}

impl SparseSeries {
    pub fn present(&self) -> usize {
        self.frames.iter().filter(|f| f.is_some()).count()
    }
}

/// Keep a series iff the fraction of present slots is at least `min_frac`.
pub fn filter_completeness(series: &SparseSeries, min_frac: f64) -> bool {
    if series.slots.is_empty() {
        return false;
    }
    // Small tolerance so that e.g. 4/5 passes a 0.8 cut despite rounding.
    series.present() as f64 / series.slots.len() as f64 >= min_frac - 1e-12
}

/// Fills missing slots with all-zero, all-invalid frames flagged as imputed.
pub fn impute_series(series: &SparseSeries) -> Result<SceneSeries> {
    if series.frames.len() != series.slots.len() {
        return Err(shape_err!("{} frames for {} slots", series.frames.len(), series.slots.len()));
    }
    let first = series.frames.iter().flatten().next().ok_or(Error::EmptySeries)?;
    let (c, h, w) = first.image.dim();
    if c != BAND_NAMES.len() {
        return Err(shape_err!("expected {} bands, got {c}", BAND_NAMES.len()));
    }
    let t = series.slots.len();
    let mut images = Array4::zeros((t, c, h, w));
    let mut valid = Array3::from_elem((t, h, w), false);
    let mut imputed = vec![true; t];
    for (i, frame) in series.frames.iter().enumerate() {
        if let Some(f) = frame {
            if f.image.dim() != (c, h, w) || f.valid.dim() != (h, w) {
                return Err(shape_err!("frame {i} has shape {:?}", f.image.dim()));
            }
            images.slice_mut(s![i, .., .., ..]).assign(&f.image);
            valid.slice_mut(s![i, .., ..]).assign(&f.valid);
            imputed[i] = false;
        }
    }
    SceneSeries::new(
        images,
        valid,
        imputed,
        series.slots.clone(),
        series.sensor,
        series.region.clone(),
        series.basin_id.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(present: &[bool]) -> SparseSeries {
        let slots = (0..present.len())
            .map(|i| NaiveDate::from_ymd_opt(2000 + i as i32, 7, 1).unwrap())
            .collect();
        let frames = present
            .iter()
            .map(|p| {
                p.then(|| Frame {
                    image: Array3::from_elem((6, 2, 3), 0.25),
                    valid: Array2::from_elem((2, 3), true),
                })
            })
            .collect();
        SparseSeries {
            slots,
            frames,
            sensor: Sensor::Landsat5,
            region: "USA".into(),
            basin_id: "b0".into(),
        }
    }

    #[test]
    fn completeness_threshold() {
        assert!(filter_completeness(&series(&[true, true, false, true, true]), 0.8));
        assert!(!filter_completeness(&series(&[true, false, false, true, true]), 0.8));
        assert!(filter_completeness(&series(&[true; 5]), 0.8));
    }

    #[test]
    fn missing_slot_is_zero_and_invalid() {
        let out = impute_series(&series(&[true, true, false, true, true])).unwrap();
        assert!(out.images.slice(s![2, .., .., ..]).iter().all(|v| *v == 0.0));
        assert!(out.valid.slice(s![2, .., ..]).iter().all(|v| !*v));
        assert_eq!(out.imputed, vec![false, false, true, false, false]);
        assert_eq!(out.mndwi_stack().unwrap().len(), 4);
    }

    #[test]
    fn complete_series_is_unchanged() {
        let src = series(&[true; 3]);
        let out = impute_series(&src).unwrap();
        assert!(out.imputed.iter().all(|i| !*i));
        for (i, f) in src.frames.iter().enumerate() {
            let f = f.as_ref().unwrap();
            assert_eq!(out.images.slice(s![i, .., .., ..]), f.image);
        }
    }

    #[test]
    fn all_missing_is_an_error() {
        let err = impute_series(&series(&[false; 5])).unwrap_err();
        assert_eq!(err.to_string(), "empty series");
    }
}
