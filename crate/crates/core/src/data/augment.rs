//! Training-time geometric augmentation: random rotation, translation and
//! resized crop, applied identically to every modality and label plane with
//! nearest-neighbour sampling.

use ndarray::{Array2, Array3, Array4, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub max_rotation_deg: f64,
    /// Maximum shift as a fraction of the image side.
    pub max_translation: f64,
    /// Range of the crop side relative to the image side.
    pub crop_scale: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            max_rotation_deg: 15.0,
            max_translation: 0.1,
            crop_scale: (0.8, 1.0),
        }
    }
}

/// Maps each output pixel to a source pixel, or to nothing when it falls
/// outside the source image.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSampler {
    map: Array2<Option<(usize, usize)>>,
}

impl AffineSampler {
    pub fn identity(h: usize, w: usize) -> Self {
        Self {
            map: Array2::from_shape_fn((h, w), |(y, x)| Some((y, x))),
        }
    }

    /// `angle` in radians, `shift` in pixels, `scale` < 1 zooms in.
    pub fn new(h: usize, w: usize, angle: f64, shift: (f64, f64), scale: f64) -> Self {
        let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
        let (s, c) = angle.sin_cos();
        let map = Array2::from_shape_fn((h, w), |(y, x)| {
            let (dy, dx) = ((y as f64 - cy) * scale, (x as f64 - cx) * scale);
            let sy = c * dy - s * dx + cy - shift.0;
            let sx = s * dy + c * dx + cx - shift.1;
            let (ry, rx) = (sy.round(), sx.round());
            (ry >= 0.0 && rx >= 0.0 && ry < h as f64 && rx < w as f64).then_some((ry as usize, rx as usize))
        });
        Self { map }
    }

    pub fn random(cfg: &AugmentConfig, h: usize, w: usize, rng: &mut impl Rng) -> Self {
        if !cfg.enabled {
            return Self::identity(h, w);
        }
        let angle = rng.random_range(-cfg.max_rotation_deg..=cfg.max_rotation_deg).to_radians();
        let ty = rng.random_range(-cfg.max_translation..=cfg.max_translation) * h as f64;
        let tx = rng.random_range(-cfg.max_translation..=cfg.max_translation) * w as f64;
        let (lo, hi) = cfg.crop_scale;
        let scale = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        Self::new(h, w, angle, (ty, tx), scale)
    }

    pub fn is_identity(&self) -> bool {
        self.map.indexed_iter().all(|((y, x), m)| *m == Some((y, x)))
    }

    pub fn apply2<T: Copy>(&self, src: &Array2<T>, fill: T) -> Array2<T> {
        self.map.map(|m| m.map_or(fill, |(y, x)| src[[y, x]]))
    }

    /// Applies over the trailing two axes of a 3-D array.
    pub fn apply3<T: Copy>(&self, src: &Array3<T>, fill: T) -> Array3<T> {
        let planes: Vec<Array2<T>> = src.outer_iter().map(|p| self.apply2(&p.to_owned(), fill)).collect();
        let views: Vec<_> = planes.iter().map(|p| p.view()).collect();
        ndarray::stack(Axis(0), &views).expect("planes share a shape")
    }

    /// Applies over the trailing two axes of a 4-D array.
    pub fn apply4<T: Copy>(&self, src: &Array4<T>, fill: T) -> Array4<T> {
        let vols: Vec<Array3<T>> = src.outer_iter().map(|v| self.apply3(&v.to_owned(), fill)).collect();
        let views: Vec<_> = vols.iter().map(|v| v.view()).collect();
        ndarray::stack(Axis(0), &views).expect("volumes share a shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn disabled_is_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let s = AffineSampler::random(&AugmentConfig::default(), 8, 8, &mut rng);
        assert!(s.is_identity());
        assert!(AffineSampler::new(9, 7, 0.0, (0.0, 0.0), 1.0).is_identity());
    }

    #[test]
    fn shift_moves_content_and_fills_border() {
        let src = Array2::from_shape_fn((4, 4), |(y, x)| (y * 4 + x) as i32);
        let out = AffineSampler::new(4, 4, 0.0, (0.0, 1.0), 1.0).apply2(&src, -1);
        assert_eq!(out[[0, 0]], -1);
        assert_eq!(out[[2, 1]], src[[2, 0]]);
    }

    #[test]
    fn enabled_preserves_shape() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let cfg = AugmentConfig { enabled: true, ..Default::default() };
        let s = AffineSampler::random(&cfg, 16, 12, &mut rng);
        let vol = Array4::<f32>::ones((2, 3, 16, 12));
        assert_eq!(s.apply4(&vol, 0.0).dim(), (2, 3, 16, 12));
    }
}
