//! Deterministic synthetic scenes with climate-driven water dynamics.
//!
//! Each scene is a bathtub model: a static terrain (the DEM) is flooded up to
//! a water level that moves once per year. The yearly level increment equals
//! a latent climate anomaly `a_j`, and the same anomaly shifts the monthly
//! climate series of that hydrological year (wet years: more precipitation,
//! runoff and soil moisture, lower maximum temperature). Because the anomaly
//! has a per-scene drift that persists into the future, both the observed
//! past frames and the past climate windows carry signal about future change.
//!
//! Sign mapping: a shrinking lake loses water, MNDWI drops at the receding
//! shoreline, and the target `median(P) - median(F)` is positive there, so the
//! receding ring is labelled `POS`. A growing lake produces a `NEG` ring.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate};
use ndarray::{Array2, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::climate::{select_climate_vars, window_climate, MonthlyClimate, YearMonth, DEFAULT_CLIMATE_VARS, TERRACLIMATE_VARIABLES};
use super::split::split_assign;
use super::{DemGrid, SampleRecord, SceneSeries, Sensor, BAND_NAMES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    ShrinkingLake,
    GrowingLake,
    MeanderingRiver,
    Static,
}

impl Dynamics {
    pub const ALL: [Dynamics; 4] = [
        Dynamics::ShrinkingLake,
        Dynamics::GrowingLake,
        Dynamics::MeanderingRiver,
        Dynamics::Static,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dynamics::ShrinkingLake => "shrinking_lake",
            Dynamics::GrowingLake => "growing_lake",
            Dynamics::MeanderingRiver => "meandering_river",
            Dynamics::Static => "static",
        }
    }
}

impl fmt::Display for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dynamics {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown dynamics {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub height: usize,
    pub width: usize,
    /// Images per series (`T`); past and future series have equal length.
    pub series_len: usize,
    /// Months per climate window (`T1`).
    pub climate_months: usize,
    pub dynamics: Dynamics,
    /// Standard deviation of additive reflectance noise.
    pub noise: f64,
    /// Per-frame probability that a pixel is cloud-masked.
    pub cloud_fraction: f64,
    pub threshold: f64,
    pub sensor: Sensor,
    pub region: String,
    pub start_year: i32,
    /// Typical yearly water-level change of a dynamic scene, meters.
    pub level_rate: f64,
    pub climate_vars: Vec<String>,
    pub with_dem: bool,
    pub with_climate: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            series_len: 5,
            climate_months: 12,
            dynamics: Dynamics::ShrinkingLake,
            noise: 0.01,
            cloud_fraction: 0.05,
            threshold: 0.1,
            sensor: Sensor::Landsat5,
            region: "USA".into(),
            start_year: 1990,
            level_rate: 1.0,
            climate_vars: DEFAULT_CLIMATE_VARS.iter().map(|s| s.to_string()).collect(),
            with_dem: true,
            with_climate: true,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.height < 8 || self.width < 8 {
            return bad("height and width must be at least 8");
        }
        if self.series_len < 2 {
            return bad("series_len must be at least 2");
        }
        if self.climate_months == 0 {
            return bad("climate_months must be positive");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be non-negative");
        }
        if !(0.0..1.0).contains(&self.cloud_fraction) {
            return bad("cloud_fraction must be in [0, 1)");
        }
        if !(self.threshold > 0.0) {
            return bad("threshold must be positive");
        }
        if !(self.level_rate > 0.0 && self.level_rate.is_finite()) {
            return bad("level_rate must be positive");
        }
        if self.climate_vars.is_empty() {
            return bad("climate_vars must not be empty");
        }
        split_assign(self.sensor, &self.region)?;
        Ok(())
    }
}

const WATER: [f64; 6] = [0.07, 0.09, 0.05, 0.03, 0.02, 0.01];
const LAND: [f64; 6] = [0.05, 0.08, 0.09, 0.28, 0.24, 0.14];
const CLOUD: f64 = 0.45;
/// Elevation span, in meters, between the deepest point and `q = 1`.
const BOWL_DEPTH: f64 = 10.0;
/// Width in meters of the soft shoreline over which pixels mix.
const SHORE_WIDTH: f64 = 0.5;

enum Terrain {
    Lake {
        cx: f64,
        cy: f64,
        a: f64,
        b: f64,
        cos: f64,
        sin: f64,
    },
    River {
        cy: f64,
        amp: f64,
        wavelength: f64,
        phase: f64,
        half_valley: f64,
        /// Phase change per year.
        migration: f64,
        transpose: bool,
    },
}

struct Bump {
    x: f64,
    y: f64,
    sigma: f64,
    amp: f64,
}

struct Scene {
    terrain: Terrain,
    bumps: Vec<Bump>,
    base: f64,
    /// Water level relative to `base`, one per year (past then future).
    levels: Vec<f64>,
    /// Hydrological-year anomalies, one per year.
    anomalies: Vec<f64>,
    texture: Array2<f64>,
    water_tint: f64,
}

impl Scene {
    /// Depth-like field: positive below the water surface of `year`.
    fn relative_depth(&self, x: f64, y: f64, year: usize, mid: usize) -> f64 {
        self.levels[year] - self.bed(x, y, year as f64 - mid as f64)
    }

    /// Terrain height above `base`; `dt` offsets a meandering channel from its
    /// reference position.
    fn bed(&self, x: f64, y: f64, dt: f64) -> f64 {
        let bumps: f64 = self
            .bumps
            .iter()
            .map(|b| b.amp * (-((x - b.x).powi(2) + (y - b.y).powi(2)) / (2.0 * b.sigma * b.sigma)).exp())
            .sum();
        let shape = match &self.terrain {
            Terrain::Lake { cx, cy, a, b, cos, sin } => {
                let (dx, dy) = (x - cx, y - cy);
                let u = dx * cos + dy * sin;
                let v = -dx * sin + dy * cos;
                BOWL_DEPTH * ((u / a).powi(2) + (v / b).powi(2))
            }
            Terrain::River {
                cy,
                amp,
                wavelength,
                phase,
                half_valley,
                migration,
                transpose,
            } => {
                let (along, across) = if *transpose { (y, x) } else { (x, y) };
                let centre = cy + amp * (std::f64::consts::TAU * along / wavelength + phase + migration * dt).sin();
                BOWL_DEPTH * ((across - centre) / half_valley).powi(2)
            }
        };
        shape + bumps
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn build_scene(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Scene {
    let (h, w) = (cfg.height as f64, cfg.width as f64);
    let s = h.min(w);
    let years = 2 * cfg.series_len;
    let rate = cfg.level_rate;
    let drift = match cfg.dynamics {
        Dynamics::ShrinkingLake => -rate * uniform(rng, 0.6, 1.4),
        Dynamics::GrowingLake => rate * uniform(rng, 0.6, 1.4),
        Dynamics::MeanderingRiver => {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            sign * rate * uniform(rng, 0.2, 0.6)
        }
        Dynamics::Static => 0.0,
    };
    let jitter = Normal::new(0.0, 0.25 * rate).unwrap();
    let anomalies: Vec<f64> = (0..years).map(|_| drift + jitter.sample(rng)).collect();
    let coupled = !matches!(cfg.dynamics, Dynamics::Static);

    let (terrain, reference) = match cfg.dynamics {
        Dynamics::MeanderingRiver => {
            let migration = if rng.random_bool(0.5) { 1.0 } else { -1.0 } * uniform(rng, 0.05, 0.15);
            (
                Terrain::River {
                    cy: s / 2.0 + uniform(rng, -0.1, 0.1) * s,
                    amp: uniform(rng, 0.08, 0.15) * s,
                    wavelength: uniform(rng, 0.6, 1.2) * s,
                    phase: uniform(rng, 0.0, std::f64::consts::TAU),
                    half_valley: uniform(rng, 0.18, 0.26) * s,
                    migration,
                    transpose: rng.random_bool(0.5),
                },
                0.3 * BOWL_DEPTH,
            )
        }
        _ => {
            let a = uniform(rng, 0.22, 0.3) * s;
            let theta = uniform(rng, 0.0, std::f64::consts::PI);
            (
                Terrain::Lake {
                    cx: w / 2.0 + uniform(rng, -0.1, 0.1) * w,
                    cy: h / 2.0 + uniform(rng, -0.1, 0.1) * h,
                    a,
                    b: a * uniform(rng, 0.7, 1.0),
                    cos: theta.cos(),
                    sin: theta.sin(),
                },
                BOWL_DEPTH,
            )
        }
    };
    let bumps = (0..4)
        .map(|_| Bump {
            x: uniform(rng, 0.0, w),
            y: uniform(rng, 0.0, h),
            sigma: uniform(rng, 0.08, 0.2) * s,
            amp: uniform(rng, -1.0, 1.0),
        })
        .collect();

    // Levels are anchored so that the reference shoreline sits at the
    // past/future boundary.
    let mid = cfg.series_len;
    let mut cumulative = vec![0.0; years];
    let mut acc = 0.0;
    for (j, a) in anomalies.iter().enumerate() {
        if coupled {
            acc += a;
        }
        cumulative[j] = acc;
    }
    let anchor = cumulative[mid];
    let levels = cumulative.iter().map(|c| reference + c - anchor).collect();

    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                uniform(rng, 0.5, 3.0) / s,
                uniform(rng, 0.5, 3.0) / s,
                uniform(rng, 0.0, std::f64::consts::TAU),
                uniform(rng, 0.03, 0.07),
            )
        })
        .collect();
    let texture = Array2::from_shape_fn((cfg.height, cfg.width), |(y, x)| {
        1.0 + waves
            .iter()
            .map(|(fx, fy, p, amp)| amp * (std::f64::consts::TAU * (fx * x as f64 + fy * y as f64) + p).sin())
            .sum::<f64>()
    });
    Scene {
        terrain,
        bumps,
        base: uniform(rng, 200.0, 1500.0),
        levels,
        anomalies,
        texture,
        water_tint: uniform(rng, 0.9, 1.1),
    }
}

fn sensor_response(sensor: Sensor, reflectance: f64) -> f64 {
    match sensor {
        Sensor::Landsat5 => 0.95 * reflectance + 0.005,
        Sensor::Sentinel2 => reflectance,
    }
}

fn render_series(
    cfg: &SyntheticConfig,
    scene: &Scene,
    years: std::ops::Range<usize>,
    dates: &[NaiveDate],
    rng: &mut ChaCha8Rng,
) -> Result<SceneSeries> {
    let t = years.len();
    let (h, w) = (cfg.height, cfg.width);
    let c = BAND_NAMES.len();
    let sigma = cfg.noise * if cfg.sensor == Sensor::Landsat5 { 1.5 } else { 1.0 };
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
    let cloud_noise = Normal::new(0.0, 0.03).unwrap();
    let mut images = Array4::zeros((t, c, h, w));
    let mut valid = Array3::from_elem((t, h, w), true);
    for (ti, year) in years.enumerate() {
        for y in 0..h {
            for x in 0..w {
                let depth = scene.relative_depth(x as f64 + 0.5, y as f64 + 0.5, year, cfg.series_len);
                let frac = (0.5 + depth / SHORE_WIDTH).clamp(0.0, 1.0);
                let cloudy = cfg.cloud_fraction > 0.0 && rng.random_bool(cfg.cloud_fraction);
                for b in 0..c {
                    let clear = frac * WATER[b] * scene.water_tint + (1.0 - frac) * LAND[b] * scene.texture[[y, x]];
                    let mut v = sensor_response(cfg.sensor, clear);
                    if cloudy {
                        v = CLOUD + cloud_noise.sample(rng);
                    } else if cfg.noise > 0.0 {
                        v += noise.sample(rng);
                    }
                    images[[ti, b, y, x]] = v.clamp(5e-4, 1.0) as f32;
                }
                if cloudy {
                    valid[[ti, y, x]] = false;
                }
            }
        }
    }
    SceneSeries::new(
        images,
        valid,
        vec![false; t],
        dates.to_vec(),
        cfg.sensor,
        cfg.region.clone(),
        format!("{}", cfg.dynamics),
    )
}

/// Monthly series for every archive variable, driven by the yearly anomalies.
fn render_climate(
    cfg: &SyntheticConfig,
    scene: &Scene,
    first: YearMonth,
    last: YearMonth,
    rng: &mut ChaCha8Rng,
) -> MonthlyClimate {
    let unit = Normal::new(0.0, 1.0).unwrap();
    let amplitude: Vec<f64> = (0..TERRACLIMATE_VARIABLES.len()).map(|_| uniform(rng, 0.6, 1.4)).collect();
    let mut out = MonthlyClimate::default();
    let years = scene.anomalies.len() as i64;
    for ym in YearMonth::range(first, last) {
        // Months from August onward belong to the next image's hydrological year.
        let idx = (ym.year - cfg.start_year) as i64 + i64::from(ym.month >= 8);
        let a = scene.anomalies[idx.clamp(0, years - 1) as usize] / cfg.level_rate;
        let season = (std::f64::consts::TAU * (ym.month as f64 - 7.0) / 12.0).cos();
        for (k, name) in TERRACLIMATE_VARIABLES.iter().enumerate() {
            let s = season * amplitude[k];
            let e = unit.sample(rng);
            let v = match *name {
                "tmmx" => 18.0 + 10.0 * s - 1.5 * a + 1.0 * e,
                "tmmn" => 6.0 + 9.0 * s - 1.2 * a + 1.0 * e,
                "pr" => (70.0 - 25.0 * s + 30.0 * a + 12.0 * e).max(0.0),
                "aet" => (50.0 + 25.0 * s + 10.0 * a + 5.0 * e).max(0.0),
                "ro" => (15.0 - 5.0 * s + 12.0 * a + 4.0 * e).max(0.0),
                "soil" => (120.0 - 30.0 * s + 40.0 * a + 8.0 * e).max(0.0),
                "def" => (40.0 + 30.0 * s - 15.0 * a + 6.0 * e).max(0.0),
                "pet" => 90.0 + 40.0 * s + 5.0 * e,
                "srad" => 180.0 + 80.0 * s + 10.0 * e,
                "swe" => (20.0 - 25.0 * s + 5.0 * e).max(0.0),
                "vap" => 1.2 + 0.5 * s + 0.05 * e,
                "vpd" => 1.0 + 0.6 * s - 0.3 * a + 0.1 * e,
                "pdsi" => 2.0 * a + 0.5 * e,
                _ => 3.0 + 0.3 * e,
            };
            out.insert(name, ym, v);
        }
    }
    out
}

/// Generates one complete sample. Identical `(config, seed)` pairs give
/// bit-identical records.
pub fn generate_synthetic_scene(cfg: &SyntheticConfig, seed: u64) -> Result<SampleRecord> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = build_scene(cfg, &mut rng);
    let t = cfg.series_len;
    let dates: Vec<NaiveDate> = (0..2 * t)
        .map(|j| {
            let start = NaiveDate::from_ymd_opt(cfg.start_year + j as i32, 6, 1).expect("valid year");
            start + Duration::days(rng.random_range(0..61))
        })
        .collect();

    let past = render_series(cfg, &scene, 0..t, &dates[..t], &mut rng)?;
    let future = render_series(cfg, &scene, t..2 * t, &dates[t..], &mut rng)?;

    let climate = if cfg.with_climate {
        let first = YearMonth::of(dates[0]).add_months(-(cfg.climate_months as i64 - 1));
        let last = YearMonth::of(dates[2 * t - 1]);
        let monthly = render_climate(cfg, &scene, first, last, &mut rng);
        let names: Vec<&str> = cfg.climate_vars.iter().map(String::as_str).collect();
        let selected = select_climate_vars(&monthly, &names)?;
        Some(window_climate(&selected, &dates[..t], cfg.climate_months)?)
    } else {
        None
    };

    let dem = cfg.with_dem.then(|| DemGrid {
        elevation: Array2::from_shape_fn((cfg.height, cfg.width), |(y, x)| {
            (scene.base + scene.bed(x as f64 + 0.5, y as f64 + 0.5, 0.0)) as f32
        }),
    });

    let id = format!("{}-{}-{:016x}", cfg.dynamics, dates[0].year(), seed);
    SampleRecord::assemble(id, past, future, climate, dem, cfg.threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{build_target, Direction};

    fn quiet(dynamics: Dynamics) -> SyntheticConfig {
        SyntheticConfig {
            height: 32,
            width: 32,
            dynamics,
            noise: 0.0,
            cloud_fraction: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn static_scene_has_zero_target() {
        let r = generate_synthetic_scene(&quiet(Dynamics::Static), 3).unwrap();
        assert!(r.targets.target.values.iter().all(|v| *v == 0.0));
        assert!(r.targets.target.valid.iter().all(|v| *v));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = SyntheticConfig {
            height: 16,
            width: 16,
            cloud_fraction: 0.1,
            ..Default::default()
        };
        assert_eq!(generate_synthetic_scene(&cfg, 11).unwrap(), generate_synthetic_scene(&cfg, 11).unwrap());
        assert_ne!(generate_synthetic_scene(&cfg, 11).unwrap(), generate_synthetic_scene(&cfg, 12).unwrap());
    }

    #[test]
    fn water_and_land_spectra() {
        let r = generate_synthetic_scene(&quiet(Dynamics::Static), 5).unwrap();
        let m = r.scene.mndwi_frame(0).unwrap();
        let (lo, hi) = m.values.iter().fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        assert!(hi > 0.3, "no water pixel: max MNDWI {hi}");
        assert!(lo < -0.3, "no land pixel: min MNDWI {lo}");
    }

    #[test]
    fn shrinking_lake_ring_is_positive() {
        let r = generate_synthetic_scene(&quiet(Dynamics::ShrinkingLake), 9).unwrap();
        let pos = r.targets.direction_mask.iter().filter(|l| **l == Direction::Pos as u8).count();
        let neg = r.targets.direction_mask.iter().filter(|l| **l == Direction::Neg as u8).count();
        assert!(pos > 20 && neg == 0, "pos {pos} neg {neg}");

        let g = generate_synthetic_scene(&quiet(Dynamics::GrowingLake), 9).unwrap();
        let pos = g.targets.direction_mask.iter().filter(|l| **l == Direction::Pos as u8).count();
        let neg = g.targets.direction_mask.iter().filter(|l| **l == Direction::Neg as u8).count();
        assert!(neg > 20 && pos == 0, "pos {pos} neg {neg}");
    }

    #[test]
    fn stored_target_matches_recomputation() {
        let r = generate_synthetic_scene(&quiet(Dynamics::MeanderingRiver), 2).unwrap();
        let t = build_target(&r.scene.mndwi_stack().unwrap(), &r.future.mndwi_stack().unwrap()).unwrap();
        assert_eq!(t, r.targets.target);
    }

    #[test]
    fn climate_windows_follow_config() {
        let r = generate_synthetic_scene(&quiet(Dynamics::GrowingLake), 1).unwrap();
        let c = r.climate.unwrap();
        assert_eq!(c.windows.dim(), (5, 12, 5));
        assert_eq!(c.variable_names, DEFAULT_CLIMATE_VARS);
        assert_eq!(r.dem.unwrap().elevation.dim(), (32, 32));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let bad = SyntheticConfig { cloud_fraction: 1.5, ..Default::default() };
        assert!(matches!(generate_synthetic_scene(&bad, 0), Err(Error::Config(_))));
        assert!("lava_lake".parse::<Dynamics>().is_err());
        let bad = SyntheticConfig { region: "Atlantis".into(), ..Default::default() };
        assert!(generate_synthetic_scene(&bad, 0).is_err());
    }
}
