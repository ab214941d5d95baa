use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::augment::AugmentConfig;
use crate::data::{Dynamics, SyntheticConfig};
use crate::error::{Error, Result};
use crate::losses::{ComboLossConfig, RegressionLossConfig};
use crate::metrics::PersistenceConvention;
use crate::model::{AdamWConfig, ModelConfig};
use crate::task::Task;
use crate::xai::ShapleyAggregation;

/// Environment variable that relocates relative output and data paths.
pub const RESULTS_ROOT_ENV: &str = "AQUA_RESULTS_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset directory holding the manifest and sample directories.
    pub dir: PathBuf,
    /// LANDSAT5 scenes (pretraining split).
    pub pretrain_samples: usize,
    /// SENTINEL2 Brazil scenes (fine-tuning split, validation carved out).
    pub finetune_samples: usize,
    /// SENTINEL2 USA/Europe scenes.
    pub test_samples: usize,
    /// Dynamics assigned round-robin over samples.
    pub dynamics: Vec<Dynamics>,
    /// Scene generator settings; `dynamics`, `sensor` and `region` are
    /// overridden per sample.
    pub synthetic: SyntheticConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data/desk"),
            pretrain_samples: 32,
            finetune_samples: 0,
            test_samples: 16,
            dynamics: Dynamics::ALL.to_vec(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    pub warmup_fraction: f64,
    pub batch_size: usize,
    /// Share of FINETUNE samples held out for validation.
    pub validation_fraction: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            pretrain_epochs: 50,
            pretrain_lr: 5e-4,
            finetune_epochs: 20,
            finetune_lr: 5e-6,
            warmup_fraction: 0.05,
            batch_size: 8,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub persistence: PersistenceConvention,
    /// `best` or `last`.
    pub checkpoint: String,
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            persistence: PersistenceConvention::default(),
            checkpoint: "best".into(),
            batch_size: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    /// Minimum subgroup support.
    pub min_support: f64,
    /// Welch-test filter level; `None` keeps every frequent subgroup.
    pub welch_alpha: Option<f64>,
    pub aggregation: ShapleyAggregation,
    /// Saliency rows; the task's headline metrics when empty.
    pub saliency_metrics: Vec<String>,
    /// Subgroup rows reported in each direction.
    pub top_subgroups: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            min_support: 0.05,
            welch_alpha: None,
            aggregation: ShapleyAggregation::Mean,
            saliency_metrics: Vec::new(),
            top_subgroups: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Directory scanned recursively for run evaluations.
    pub results_dir: PathBuf,
    /// Where the merged tables and plots go.
    pub output_dir: PathBuf,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            results_dir: PathBuf::from("results"),
            output_dir: PathBuf::from("results/report"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub task: Task,
    pub seed: u64,
    /// Change threshold `t`.
    pub threshold: f64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub loss: RegressionLossConfig,
    pub classification_loss: ComboLossConfig,
    pub schedule: ScheduleConfig,
    pub optimizer: AdamWConfig,
    pub augment: AugmentConfig,
    pub eval: EvalConfig,
    pub explain: ExplainConfig,
    pub report: ReportConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "desk".into(),
            task: Task::Change,
            seed: 7,
            threshold: 0.1,
            output_dir: PathBuf::from("results/desk"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            loss: RegressionLossConfig::default(),
            classification_loss: ComboLossConfig::default(),
            schedule: ScheduleConfig::default(),
            optimizer: AdamWConfig::default(),
            augment: AugmentConfig::default(),
            eval: EvalConfig::default(),
            explain: ExplainConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// The model config with task, series and image geometry taken from
    /// the experiment and the data generator.
    pub fn effective_model(&self) -> ModelConfig {
        let s = &self.data.synthetic;
        ModelConfig {
            task: self.task,
            series_len: s.series_len,
            climate_months: s.climate_months,
            climate_vars: s.climate_vars.len(),
            height: s.height,
            width: s.width,
            use_dem: self.model.use_dem && s.with_dem,
            use_climate: self.model.use_climate && s.with_climate,
            ..self.model.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.threshold > 0.0) {
            return bad(format!("threshold must be positive, got {}", self.threshold));
        }
        if self.data.dynamics.is_empty() {
            return bad("data.dynamics must list at least one dynamics".into());
        }
        if self.data.pretrain_samples == 0 {
            return bad("data.pretrain_samples must be positive".into());
        }
        if self.schedule.batch_size == 0 || self.eval.batch_size == 0 {
            return bad("batch sizes must be positive".into());
        }
        if !(0.0..1.0).contains(&self.schedule.validation_fraction) {
            return bad("schedule.validation_fraction must be in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.schedule.warmup_fraction) {
            return bad("schedule.warmup_fraction must be in [0, 1]".into());
        }
        if !(self.schedule.pretrain_lr > 0.0 && self.schedule.finetune_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !matches!(self.eval.checkpoint.as_str(), "best" | "last") {
            return bad(format!("eval.checkpoint must be \"best\" or \"last\", got {:?}", self.eval.checkpoint));
        }
        if !(self.explain.min_support > 0.0 && self.explain.min_support <= 1.0) {
            return bad("explain.min_support must be in (0, 1]".into());
        }
        self.data.synthetic.validate()?;
        self.loss.validate()?;
        self.effective_model().validate()
    }
}

/// Resolves `path` against the results root (the environment variable when
/// set, the working directory otherwise). Absolute paths are kept.
pub fn resolve(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(RESULTS_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}
