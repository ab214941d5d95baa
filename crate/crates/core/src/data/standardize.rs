use ndarray::{Array3, Array4, Axis};
use serde::{Deserialize, Serialize};

use super::{ModelInput, SampleRecord, BAND_NAMES};
use crate::error::{Error, Result};

/// Mean and population standard deviation of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

impl ChannelStats {
    fn from_moments(n: f64, sum: f64, sum_sq_dev: f64) -> Self {
        if n == 0.0 {
            return Self { mean: 0.0, std: 0.0 };
        }
        Self {
            mean: sum / n,
            std: (sum_sq_dev / n).sqrt(),
        }
    }

    /// `(x - mean) / std`; zero-variance channels pass through.
    pub fn apply(&self, x: f32) -> f32 {
        if self.std > 0.0 {
            ((x as f64 - self.mean) / self.std) as f32
        } else {
            x
        }
    }
}

/// Per-channel statistics fitted on the pretraining split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub image: Vec<ChannelStats>,
    pub dem: Option<ChannelStats>,
    pub climate: Option<Vec<ChannelStats>>,
}

/// Two-pass accumulator (mean first, then squared deviations).
fn two_pass<'a, I, F>(make_iter: F) -> ChannelStats
where
    F: Fn() -> I,
    I: Iterator<Item = &'a f32>,
{
    let (mut n, mut sum) = (0.0, 0.0);
    for x in make_iter() {
        n += 1.0;
        sum += *x as f64;
    }
    if n == 0.0 {
        return ChannelStats { mean: 0.0, std: 0.0 };
    }
    let mean = sum / n;
    let ss: f64 = make_iter().map(|x| (*x as f64 - mean).powi(2)).sum();
    ChannelStats::from_moments(n, sum, ss)
}

impl NormStats {
    /// Fits statistics on `records`. Image statistics use valid pixels of
    /// non-imputed frames only.
    pub fn fit<'a>(records: impl IntoIterator<Item = &'a SampleRecord> + Clone) -> Result<Self> {
        let recs: Vec<&SampleRecord> = records.into_iter().collect();
        if recs.is_empty() {
            return Err(Error::InvalidArgument("cannot fit statistics on zero samples".into()));
        }
        let image = (0..BAND_NAMES.len())
            .map(|c| {
                let values: Vec<f32> = recs
                    .iter()
                    .flat_map(|r| valid_band_values(r, c))
                    .collect();
                two_pass(|| values.iter())
            })
            .collect();
        let dem = recs.iter().all(|r| r.dem.is_some()).then(|| {
            two_pass(|| recs.iter().flat_map(|r| r.dem.as_ref().unwrap().elevation.iter()))
        });
        let climate = if recs.iter().all(|r| r.climate.is_some()) {
            let c1 = recs[0].climate.as_ref().unwrap().windows.dim().2;
            Some(
                (0..c1)
                    .map(|v| {
                        two_pass(|| {
                            recs.iter().flat_map(move |r| {
                                r.climate
                                    .as_ref()
                                    .unwrap()
                                    .windows
                                    .index_axis(Axis(2), v)
                                    .into_iter()
                            })
                        })
                    })
                    .collect(),
            )
        } else {
            None
        };
        Ok(Self { image, dem, climate })
    }

    pub fn zero_variance_channels(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .image
            .iter()
            .zip(BAND_NAMES)
            .filter(|(s, _)| s.std == 0.0)
            .map(|(_, n)| n.to_string())
            .collect();
        if self.dem.is_some_and(|d| d.std == 0.0) {
            out.push("DEM".into());
        }
        if let Some(c) = &self.climate {
            out.extend(
                c.iter()
                    .enumerate()
                    .filter(|(_, s)| s.std == 0.0)
                    .map(|(i, _)| format!("climate[{i}]")),
            );
        }
        out
    }
}

fn valid_band_values(r: &SampleRecord, c: usize) -> Vec<f32> {
    let s = &r.scene;
    let mut out = Vec::new();
    for t in (0..s.len()).filter(|t| !s.imputed[*t]) {
        for ((y, x), ok) in s.valid.index_axis(Axis(0), t).indexed_iter() {
            if *ok {
                out.push(s.images[[t, c, y, x]]);
            }
        }
    }
    out
}

/// Standardizes a record into model inputs. Invalid pixels become zero, the
/// mean-value token after standardization.
pub fn standardize(record: &SampleRecord, stats: &NormStats) -> Result<ModelInput> {
    let scene = &record.scene;
    let (t, c, h, w) = scene.images.dim();
    if stats.image.len() != c {
        return Err(Error::Shape(format!("{} image stats for {c} channels", stats.image.len())));
    }
    for name in stats.zero_variance_channels() {
        log::warn!("channel {name} has zero variance; passing through unscaled");
    }
    let mut images = Array4::zeros((t, c, h, w));
    for ((ti, ci, y, x), out) in images.indexed_iter_mut() {
        if scene.valid[[ti, y, x]] {
            *out = stats.image[ci].apply(scene.images[[ti, ci, y, x]]);
        }
    }
    let dem = match (&record.dem, stats.dem) {
        (Some(d), Some(s)) => Some(d.elevation.mapv(|v| s.apply(v))),
        (Some(d), None) => Some(d.elevation.clone()),
        (None, _) => None,
    };
    let climate = match (&record.climate, &stats.climate) {
        (Some(cw), Some(s)) => {
            if s.len() != cw.windows.dim().2 {
                return Err(Error::Shape("climate stats / variables mismatch".into()));
            }
            let mut out: Array3<f32> = cw.windows.clone();
            for ((_, _, v), x) in out.indexed_iter_mut() {
                *x = s[v].apply(*x);
            }
            Some(out)
        }
        (Some(cw), None) => Some(cw.windows.clone()),
        (None, _) => None,
    };
    Ok(ModelInput {
        images,
        dem,
        climate,
    })
}
