//! Dataset generation and loading for experiments.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Array4};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::data::augment::AffineSampler;
use crate::data::io::{save_sample, Manifest, ManifestEntry, MANIFEST_FILE};
use crate::data::{generate_synthetic_scene, standardize, ModelInput, NormStats, SampleRecord, Sensor, Split};
use crate::error::{Error, Result};
use crate::raster::{Grid2D, TargetPack, IGNORE_LABEL};
use crate::task::Task;

use super::config::{resolve, ExperimentConfig};

/// Stable 64-bit seed for the `index`-th sample of `split`.
pub fn sample_seed(seed: u64, split: Split, index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(split.to_string().as_bytes());
    h.update((index as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn sensor_region(split: Split, index: usize) -> (Sensor, &'static str) {
    const PRETRAIN_REGIONS: [&str; 3] = ["USA", "Europe", "Brazil"];
    const TEST_REGIONS: [&str; 2] = ["USA", "Europe"];
    match split {
        Split::Pretrain => (Sensor::Landsat5, PRETRAIN_REGIONS[index % 3]),
        Split::Finetune => (Sensor::Sentinel2, "Brazil"),
        Split::Test => (Sensor::Sentinel2, TEST_REGIONS[index % 2]),
    }
}

fn is_non_empty_dir(dir: &Path) -> Result<bool> {
    Ok(dir.is_dir() && std::fs::read_dir(dir)?.next().is_some())
}

/// Writes the synthetic dataset described by `cfg.data` and returns its
/// manifest. A non-empty target directory is replaced only with `force`.
pub fn gen_data(cfg: &ExperimentConfig, force: bool) -> Result<Manifest> {
    let dir = resolve(&cfg.data.dir);
    if is_non_empty_dir(&dir)? {
        if !force {
            return Err(Error::Config(format!("{} is not empty; pass --force to overwrite", dir.display())));
        }
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::create_dir_all(&dir)?;
    let mut manifest = Manifest::new(&dir);
    let plan = [
        (Split::Pretrain, cfg.data.pretrain_samples),
        (Split::Finetune, cfg.data.finetune_samples),
        (Split::Test, cfg.data.test_samples),
    ];
    let mut global = 0usize;
    for (split, count) in plan {
        for i in 0..count {
            let (sensor, region) = sensor_region(split, i);
            let scfg = crate::data::SyntheticConfig {
                dynamics: cfg.data.dynamics[global % cfg.data.dynamics.len()],
                sensor,
                region: region.to_string(),
                threshold: cfg.threshold,
                ..cfg.data.synthetic.clone()
            };
            global += 1;
            let mut record = generate_synthetic_scene(&scfg, sample_seed(cfg.seed, split, i))?;
            if record.split != split {
                return Err(Error::Config(format!("{sensor}/{region} is assigned to {}, expected {split}", record.split)));
            }
            record.id = format!("{}_{i:04}", split.to_string().to_ascii_lowercase());
            let rel = PathBuf::from("samples").join(&record.id);
            save_sample(&record, &dir.join(&rel))?;
            manifest.samples.push(ManifestEntry {
                id: record.id.clone(),
                path: rel,
                split,
            });
        }
    }
    manifest.save()?;
    Ok(manifest)
}

pub fn load_manifest(cfg: &ExperimentConfig) -> Result<Manifest> {
    let path = resolve(&cfg.data.dir).join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::Config(format!("no dataset manifest at {}; run gen-data first", path.display())));
    }
    Manifest::load(&path)
}

/// Loads one split, checks its geometry against the config and rebuilds
/// the targets when the stored threshold differs from `cfg.threshold`.
pub fn load_split(cfg: &ExperimentConfig, manifest: &Manifest, split: Split) -> Result<Vec<SampleRecord>> {
    let s = &cfg.data.synthetic;
    let mut records = manifest.load_split(split)?;
    for r in &mut records {
        let (h, w) = r.scene.spatial_dim();
        if (h, w) != (s.height, s.width) || r.scene.len() != s.series_len {
            return Err(Error::Config(format!(
                "sample {} is {}x{} with {} frames, config expects {}x{} with {}",
                r.id,
                h,
                w,
                r.scene.len(),
                s.height,
                s.width,
                s.series_len
            )));
        }
        if r.targets.threshold != cfg.threshold {
            r.targets = TargetPack::from_target(r.targets.target.clone(), cfg.threshold)?;
        }
    }
    Ok(records)
}

/// A standardized sample with its targets.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub id: String,
    pub input: ModelInput,
    pub targets: TargetPack,
}

pub fn prepare(records: &[SampleRecord], stats: &NormStats) -> Result<Vec<Prepared>> {
    records
        .iter()
        .map(|r| {
            Ok(Prepared {
                id: r.id.clone(),
                input: standardize(r, stats)?,
                targets: r.targets.clone(),
            })
        })
        .collect()
}

/// Holds out `fraction` of `records` (at least one when the fraction is
/// positive and two or more records exist), chosen by a seeded shuffle.
/// Returns `(train, validation)` in original order.
pub fn validation_split(records: Vec<SampleRecord>, fraction: f64, seed: u64) -> (Vec<SampleRecord>, Vec<SampleRecord>) {
    let n = records.len();
    let k = if fraction <= 0.0 || n < 2 {
        0
    } else {
        ((fraction * n as f64).round() as usize).clamp(1, n - 1)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x7661_6c69_6461_7465));
    let mut held = vec![false; n];
    for &i in &order[..k] {
        held[i] = true;
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (i, r) in records.into_iter().enumerate() {
        if held[i] {
            val.push(r);
        } else {
            train.push(r);
        }
    }
    (train, val)
}

/// Training label planes for one sample in `task`.
#[derive(Debug, Clone)]
pub enum TaskLabels {
    Classes(Array2<u8>),
    /// `|T| / 2` and its validity mask.
    Values(Array2<f64>, Array2<bool>),
}

pub fn task_labels(task: Task, targets: &TargetPack) -> TaskLabels {
    match task {
        Task::Change => TaskLabels::Classes(targets.change_mask.clone()),
        Task::Direction => TaskLabels::Classes(targets.direction_mask.clone()),
        Task::Magnitude => {
            let m: &Grid2D = &targets.magnitude;
            let v = ndarray::Zip::from(&m.values)
                .and(&m.valid)
                .map_collect(|&x, &ok| if ok && x.is_finite() { 0.5 * x } else { 0.0 });
            TaskLabels::Values(v, m.valid.clone())
        }
    }
}

/// Applies the same geometric warp to every spatial input and label plane.
/// Pixels that come from outside the frame are zero in the inputs and
/// ignored in the labels.
pub fn warp(sampler: &AffineSampler, input: &ModelInput, labels: &TaskLabels) -> (ModelInput, TaskLabels) {
    if sampler.is_identity() {
        return (input.clone(), labels.clone());
    }
    let images: Array4<f32> = sampler.apply4(&input.images, 0.0);
    let dem = input.dem.as_ref().map(|d| sampler.apply2(d, 0.0));
    let labels = match labels {
        TaskLabels::Classes(c) => TaskLabels::Classes(sampler.apply2(c, IGNORE_LABEL)),
        TaskLabels::Values(v, m) => TaskLabels::Values(sampler.apply2(v, 0.0), sampler.apply2(m, false)),
    };
    (
        ModelInput {
            images,
            dem,
            climate: input.climate.clone(),
        },
        labels,
    )
}
