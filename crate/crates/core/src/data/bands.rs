use std::collections::HashMap;

use ndarray::{Array2, Array3, Axis};

use super::Sensor;
use crate::error::{Error, Result};
use crate::shape_err;

/// Harmonized band order shared by both sensors.
pub const BAND_NAMES: [&str; 6] = ["Blue", "Green", "Red", "NIR", "SWIR1", "SWIR2"];
pub const GREEN: usize = 1;
pub const SWIR1: usize = 4;

/// Source band codes feeding each harmonized slot.
pub fn source_bands(sensor: Sensor) -> [&'static str; 6] {
    match sensor {
        Sensor::Landsat5 => ["B1", "B2", "B3", "B4", "B5", "B7"],
        Sensor::Sentinel2 => ["B2", "B3", "B4", "B8", "B11", "B12"],
    }
}

/// Selects and orders the six comparable bands of `sensor` into a
/// `C x H x W` stack. Extra source bands are ignored.
pub fn harmonize_bands(sensor: Sensor, raw: &HashMap<String, Array2<f32>>) -> Result<Array3<f32>> {
    let codes = source_bands(sensor);
    let grids = codes
        .iter()
        .map(|code| raw.get(*code).ok_or_else(|| Error::MissingBand(code.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let dim = grids[0].dim();
    if let Some(g) = grids.iter().find(|g| g.dim() != dim) {
        return Err(shape_err!("band grids differ: {:?} vs {:?}", g.dim(), dim));
    }
    let views: Vec<_> = grids.iter().map(|g| g.view()).collect();
    Ok(ndarray::stack(Axis(0), &views).expect("equal shapes checked"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(codes: &[&str]) -> HashMap<String, Array2<f32>> {
        codes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.to_string(), Array2::from_elem((2, 2), i as f32)))
            .collect()
    }

    #[test]
    fn sentinel_green_is_b3() {
        let bands = raw(&["B1", "B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B9", "B11", "B12"]);
        let out = harmonize_bands(Sensor::Sentinel2, &bands).unwrap();
        assert_eq!(out.dim(), (6, 2, 2));
        assert_eq!(out[[GREEN, 0, 0]], bands["B3"][[0, 0]]);
        assert_eq!(out[[5, 0, 0]], bands["B12"][[0, 0]]);
    }

    #[test]
    fn landsat_swir2_is_b7() {
        let bands = raw(&["B1", "B2", "B3", "B4", "B5", "B6", "B7"]);
        let out = harmonize_bands(Sensor::Landsat5, &bands).unwrap();
        assert_eq!(out[[5, 1, 1]], bands["B7"][[1, 1]]);
        assert_eq!(out[[SWIR1, 1, 1]], bands["B5"][[1, 1]]);
    }

    #[test]
    fn missing_band_is_named() {
        let bands = raw(&["B2", "B3", "B4", "B8", "B12"]);
        let err = harmonize_bands(Sensor::Sentinel2, &bands).unwrap_err();
        assert_eq!(err.to_string(), "missing band B11");
    }
}
