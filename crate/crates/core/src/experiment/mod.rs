//! Config-driven experiment harness: dataset generation, training,
//! evaluation against baselines, explanation and report merging.

pub mod config;
pub mod dataset;
pub mod evaluate;
pub mod explain;
pub mod plot;
pub mod report;
pub mod train;

use std::path::{Path, PathBuf};

use candle_core::{DType, Device};

use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, read_checkpoint_meta, Actu};
use crate::task::Task;

pub use config::{resolve, DataConfig, EvalConfig, ExperimentConfig, ExplainConfig, ReportConfig, ScheduleConfig, RESULTS_ROOT_ENV};
pub use dataset::{gen_data, load_manifest, load_split, prepare, sample_seed, validation_split, Prepared};
pub use evaluate::{evaluate, evaluate_prepared, Comparison, Evaluation, ReportHeader};
pub use explain::{explain, Explanation, MostLeastRow};
pub use report::{report, ReportSummary};
pub use train::{train, EpochLog, TrainState, TrainSummary};

/// Metric that summarizes a task: CHG F1, mean NEG/POS F1, or MAE.
pub fn headline_metric(task: Task) -> &'static str {
    match task {
        Task::Change => "CHG_F",
        Task::Direction => "NEG_POS_mean_F",
        Task::Magnitude => "MAE",
    }
}

/// File layout of one run's output directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
    pub checkpoints: PathBuf,
    pub best: PathBuf,
    pub last: PathBuf,
    pub train_log: PathBuf,
    pub config: PathBuf,
    pub dump: PathBuf,
    pub eval: PathBuf,
    pub explain: PathBuf,
}

impl RunPaths {
    pub fn new(root: &Path) -> Self {
        let checkpoints = root.join("checkpoints");
        Self {
            root: root.to_path_buf(),
            best: checkpoints.join("best.ckpt"),
            last: checkpoints.join("last.ckpt"),
            checkpoints,
            train_log: root.join("train_log.jsonl"),
            config: root.join("config.toml"),
            dump: root.join("nonfinite_dump.json"),
            eval: root.join("eval"),
            explain: root.join("explain"),
        }
    }

    pub fn checkpoint(&self, which: &str) -> PathBuf {
        if which == "last" {
            self.last.clone()
        } else {
            self.best.clone()
        }
    }
}

/// Loads the configured checkpoint of a run, rejecting one trained for a
/// different task or model, and returns its normalization statistics.
pub fn load_run_model(cfg: &ExperimentConfig) -> Result<(Actu, NormStats, PathBuf)> {
    let paths = RunPaths::new(&resolve(&cfg.output_dir));
    let path = paths.checkpoint(&cfg.eval.checkpoint);
    if !path.is_file() {
        return Err(Error::Config(format!("no checkpoint at {}; run train first", path.display())));
    }
    let meta = read_checkpoint_meta(&path)?;
    if meta.model.task != cfg.task {
        return Err(Error::Checkpoint(format!(
            "checkpoint {} was trained for task {}, config asks for {}",
            path.display(),
            meta.model.task,
            cfg.task
        )));
    }
    let (model, _, meta) = load_checkpoint(&path, Some(&cfg.effective_model()), DType::F32, &Device::Cpu)?;
    let state: TrainState = serde_json::from_value(meta.extra).map_err(|e| Error::Checkpoint(format!("missing train state: {e}")))?;
    Ok((model, state.stats, path))
}
