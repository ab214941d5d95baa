//! Pixelwise raster math: the MNDWI water index, validity-aware temporal
//! medians, and the change targets derived from them.
//!
//! Sign convention: the target is `median(past) - median(future)`, so a pixel
//! that *loses* water over time (MNDWI drops) has a positive target.

use chrono::NaiveDate;
use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shape_err;

/// Label written into class masks for pixels excluded from loss and metrics.
pub const IGNORE_LABEL: u8 = 255;

/// Single-band raster with a per-pixel validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub values: Array2<f64>,
    pub valid: Array2<bool>,
}

impl Grid2D {
    pub fn new(values: Array2<f64>, valid: Array2<bool>) -> Result<Self> {
        if values.dim() != valid.dim() {
            return Err(shape_err!(
                "values {:?} vs mask {:?}",
                values.dim(),
                valid.dim()
            ));
        }
        if Zip::from(&values)
            .and(&valid)
            .fold(false, |bad, v, ok| bad || (*ok && !v.is_finite()))
        {
            return Err(Error::InvalidArgument(
                "non-finite value on a valid pixel".into(),
            ));
        }
        Ok(Self { values, valid })
    }

    /// Grid with every pixel valid.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let valid = Array2::from_elem(values.dim(), true);
        Self::new(values, valid)
    }

    pub fn filled(dim: (usize, usize), value: f64) -> Self {
        Self {
            values: Array2::from_elem(dim, value),
            valid: Array2::from_elem(dim, true),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    fn check_same_dim(&self, other: &Grid2D, what: &str) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(shape_err!("{what}: {:?} vs {:?}", self.dim(), other.dim()));
        }
        Ok(())
    }

    /// Applies `f` to valid pixels; invalid pixels are left at zero.
    fn map_valid(&self, f: impl Fn(f64) -> f64) -> Grid2D {
        let mut values = Array2::zeros(self.dim());
        Zip::from(&mut values)
            .and(&self.values)
            .and(&self.valid)
            .for_each(|o, v, ok| {
                if *ok {
                    *o = f(*v)
                }
            });
        Grid2D {
            values,
            valid: self.valid.clone(),
        }
    }
}

/// Time-ordered stack of co-registered grids.
#[derive(Debug, Clone, PartialEq)]
pub struct GridStack {
    frames: Vec<Grid2D>,
    dates: Vec<NaiveDate>,
}

impl GridStack {
    pub fn new(frames: Vec<Grid2D>, dates: Vec<NaiveDate>) -> Result<Self> {
        if frames.len() != dates.len() {
            return Err(shape_err!(
                "{} frames but {} dates",
                frames.len(),
                dates.len()
            ));
        }
        if let Some(first) = frames.first() {
            for f in &frames[1..] {
                first.check_same_dim(f, "stack frame")?;
            }
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "stack dates must be strictly increasing".into(),
            ));
        }
        Ok(Self { frames, dates })
    }

    pub fn frames(&self) -> &[Grid2D] {
        &self.frames
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> Option<(usize, usize)> {
        self.frames.first().map(Grid2D::dim)
    }
}

/// `(G - SWIR) / (G + SWIR)`. Pixels with a zero denominator become invalid.
pub fn compute_mndwi(green: &Grid2D, swir: &Grid2D) -> Result<Grid2D> {
    green.check_same_dim(swir, "mndwi bands")?;
    let dim = green.dim();
    let mut values = Array2::zeros(dim);
    let mut valid = Array2::from_elem(dim, false);
    Zip::from(&mut values)
        .and(&mut valid)
        .and(&green.values)
        .and(&swir.values)
        .and(&green.valid)
        .and(&swir.valid)
        .for_each(|o, ok, g, s, gv, sv| {
            let denom = g + s;
            if *gv && *sv && denom != 0.0 {
                let v = (g - s) / denom;
                if v.is_finite() {
                    *o = v;
                    *ok = true;
                }
            }
        });
    Ok(Grid2D { values, valid })
}

/// Median of a slice in place; the midpoint of the two central values for
/// even lengths.
pub fn median_in_place(xs: &mut [f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    })
}

/// Pixelwise median over the frames in which each pixel is valid.
pub fn temporal_median(stack: &GridStack) -> Result<Grid2D> {
    let dim = stack.dim().ok_or(Error::EmptySeries)?;
    let mut values = Array2::zeros(dim);
    let mut valid = Array2::from_elem(dim, false);
    let mut buf = Vec::with_capacity(stack.len());
    for ((r, c), out) in values.indexed_iter_mut() {
        buf.clear();
        buf.extend(
            stack
                .frames
                .iter()
                .filter(|f| f.valid[[r, c]])
                .map(|f| f.values[[r, c]]),
        );
        if let Some(m) = median_in_place(&mut buf) {
            *out = m;
            valid[[r, c]] = true;
        }
    }
    Ok(Grid2D { values, valid })
}

/// Target `median(past) - median(future)`, valid where both medians are.
pub fn build_target(past: &GridStack, future: &GridStack) -> Result<Grid2D> {
    let p = temporal_median(past)?;
    let f = temporal_median(future)?;
    p.check_same_dim(&f, "past vs future footprint")?;
    let valid = &p.valid & &f.valid;
    let mut values = &p.values - &f.values;
    Zip::from(&mut values).and(&valid).for_each(|v, ok| {
        if !*ok {
            *v = 0.0
        }
    });
    Ok(Grid2D { values, valid })
}

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "threshold must be positive, got {t}"
        )))
    }
}

/// Binary change classes.
pub mod change {
    pub const NO_CHANGE: u8 = 0;
    pub const CHANGE: u8 = 1;
    pub const NAMES: [&str; 2] = ["NoCHG", "CHG"];
}

/// Three-way direction classes, ordered negative / none / positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Direction {
    Neg = 0,
    None = 1,
    Pos = 2,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::Neg, Direction::None, Direction::Pos];
    pub const NAMES: [&'static str; 3] = ["NEG", "NONE", "POS"];

    pub fn classify(value: f64, t: f64) -> Direction {
        if value < -t {
            Direction::Neg
        } else if value > t {
            Direction::Pos
        } else {
            Direction::None
        }
    }

    pub fn from_label(label: u8) -> Option<Direction> {
        Self::ALL.get(label as usize).copied()
    }
}

/// `|T| > t` on valid pixels; invalid pixels carry [`IGNORE_LABEL`].
pub fn change_mask(target: &Grid2D, t: f64) -> Result<Array2<u8>> {
    check_threshold(t)?;
    Ok(Zip::from(&target.values)
        .and(&target.valid)
        .map_collect(|v, ok| {
            if !*ok {
                IGNORE_LABEL
            } else if v.abs() > t {
                change::CHANGE
            } else {
                change::NO_CHANGE
            }
        }))
}

/// Symmetric `±t` direction classes; invalid pixels carry [`IGNORE_LABEL`].
pub fn direction_mask(target: &Grid2D, t: f64) -> Result<Array2<u8>> {
    check_threshold(t)?;
    Ok(Zip::from(&target.values)
        .and(&target.valid)
        .map_collect(|v, ok| {
            if *ok {
                Direction::classify(*v, t) as u8
            } else {
                IGNORE_LABEL
            }
        }))
}

pub fn magnitude_target(target: &Grid2D) -> Grid2D {
    target.map_valid(f64::abs)
}

/// Maps `[-2, 2]` onto `[-1, 1]`.
pub fn normalize_target(target: &Grid2D) -> Result<Grid2D> {
    if Zip::from(&target.values)
        .and(&target.valid)
        .fold(false, |bad, v, ok| bad || (*ok && v.abs() > 2.0))
    {
        return Err(Error::InvalidArgument(
            "target outside [-2, 2] cannot be normalized".into(),
        ));
    }
    Ok(target.map_valid(|v| v / 2.0))
}

/// Exact inverse of [`normalize_target`].
pub fn denormalize_target(normalized: &Grid2D) -> Grid2D {
    normalized.map_valid(|v| v * 2.0)
}

/// The target together with every task label derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPack {
    pub target: Grid2D,
    pub change_mask: Array2<u8>,
    pub direction_mask: Array2<u8>,
    pub magnitude: Grid2D,
    pub threshold: f64,
}

impl TargetPack {
    pub fn from_target(target: Grid2D, threshold: f64) -> Result<Self> {
        if Zip::from(&target.values)
            .and(&target.valid)
            .fold(false, |bad, v, ok| bad || (*ok && v.abs() > 2.0 + 1e-12))
        {
            return Err(Error::InvalidArgument("target outside [-2, 2]".into()));
        }
        Ok(Self {
            change_mask: change_mask(&target, threshold)?,
            direction_mask: direction_mask(&target, threshold)?,
            magnitude: magnitude_target(&target),
            target,
            threshold,
        })
    }

    pub fn build(past: &GridStack, future: &GridStack, threshold: f64) -> Result<Self> {
        Self::from_target(build_target(past, future)?, threshold)
    }

    pub fn dim(&self) -> (usize, usize) {
        self.target.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn g(v: f64) -> Grid2D {
        Grid2D::filled((1, 1), v)
    }

    fn stack(vals: &[f64]) -> GridStack {
        let frames = vals.iter().map(|v| g(*v)).collect();
        let dates = (0..vals.len())
            .map(|i| NaiveDate::from_ymd_opt(2000 + i as i32, 7, 1).unwrap())
            .collect();
        GridStack::new(frames, dates).unwrap()
    }

    #[test]
    fn mndwi_examples() {
        let out = compute_mndwi(&g(0.6), &g(0.2)).unwrap();
        assert!((out.values[[0, 0]] - 0.5).abs() < 1e-15);
        let out = compute_mndwi(&g(0.3), &g(0.3)).unwrap();
        assert_eq!(out.values[[0, 0]], 0.0);
        let out = compute_mndwi(&g(0.0), &g(0.0)).unwrap();
        assert!(!out.valid[[0, 0]]);
    }

    #[test]
    fn mndwi_propagates_invalid_and_rejects_shape() {
        let mut green = Grid2D::filled((1, 2), 0.5);
        green.valid[[0, 1]] = false;
        let out = compute_mndwi(&green, &Grid2D::filled((1, 2), 0.1)).unwrap();
        assert_eq!(out.valid, array![[true, false]]);
        assert!(matches!(
            compute_mndwi(&green, &g(0.1)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn median_examples() {
        assert_eq!(temporal_median(&stack(&[0.1, 0.5, 0.9])).unwrap().values[[0, 0]], 0.5);
        assert_eq!(temporal_median(&stack(&[0.3; 4])).unwrap().values[[0, 0]], 0.3);
        assert!((temporal_median(&stack(&[0.2, 0.4])).unwrap().values[[0, 0]] - 0.3).abs() < 1e-15);

        let mut s = stack(&[0.2, 0.8]);
        s.frames[1].valid[[0, 0]] = false;
        assert_eq!(temporal_median(&s).unwrap().values[[0, 0]], 0.2);

        s.frames[0].valid[[0, 0]] = false;
        assert!(!temporal_median(&s).unwrap().valid[[0, 0]]);

        let empty = GridStack::new(vec![], vec![]).unwrap();
        assert!(matches!(temporal_median(&empty), Err(Error::EmptySeries)));
    }

    #[test]
    fn stack_rejects_unordered_dates() {
        let d = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        assert!(GridStack::new(vec![g(0.0), g(0.0)], vec![d, d]).is_err());
    }

    #[test]
    fn target_examples() {
        let t = build_target(&stack(&[0.4; 3]), &stack(&[0.1; 3])).unwrap();
        assert!((t.values[[0, 0]] - 0.3).abs() < 1e-15);
        let t = build_target(&stack(&[0.2, 0.7]), &stack(&[0.2, 0.7])).unwrap();
        assert_eq!(t.values[[0, 0]], 0.0);
        let t = build_target(&stack(&[-1.0; 3]), &stack(&[1.0; 3])).unwrap();
        assert_eq!(t.values[[0, 0]], -2.0);

        let other = GridStack::new(
            vec![Grid2D::filled((2, 2), 0.0)],
            vec![NaiveDate::from_ymd_opt(2001, 1, 1).unwrap()],
        )
        .unwrap();
        assert!(matches!(build_target(&stack(&[0.1]), &other), Err(Error::Shape(_))));
    }

    #[test]
    fn mask_examples() {
        let t = Grid2D::from_values(array![[0.15, -0.15, 0.05]]).unwrap();
        assert_eq!(change_mask(&t, 0.1).unwrap(), array![[1, 1, 0]]);
        assert_eq!(direction_mask(&t, 0.1).unwrap(), array![[2, 0, 1]]);
        assert!(change_mask(&t, 0.0).is_err());
        assert!(direction_mask(&t, -0.1).is_err());
    }

    #[test]
    fn invalid_pixels_are_ignored() {
        let mut t = Grid2D::from_values(array![[0.5, 0.5]]).unwrap();
        t.valid[[0, 1]] = false;
        assert_eq!(change_mask(&t, 0.1).unwrap(), array![[1, IGNORE_LABEL]]);
        assert_eq!(direction_mask(&t, 0.1).unwrap(), array![[2, IGNORE_LABEL]]);
    }

    #[test]
    fn magnitude_and_normalize_examples() {
        let t = Grid2D::from_values(array![[-0.3, 0.0, 2.0]]).unwrap();
        assert_eq!(magnitude_target(&t).values, array![[0.3, 0.0, 2.0]]);
        let t = Grid2D::from_values(array![[2.0, 0.0, -1.0]]).unwrap();
        assert_eq!(normalize_target(&t).unwrap().values, array![[1.0, 0.0, -0.5]]);
        let bad = Grid2D::from_values(array![[2.5]]).unwrap();
        assert!(normalize_target(&bad).is_err());
    }
}
