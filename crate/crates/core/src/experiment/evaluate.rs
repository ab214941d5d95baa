//! Test-split evaluation of a trained model next to the constant and
//! persistence baselines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{standardize, NormStats, SampleRecord, Split};
use crate::error::Result;
use crate::losses::{ComboLossConfig, RegressionLossConfig};
use crate::metrics::{
    compare_per_sample, constant_predict, persistence_predict, stars, MetricReport, PersistenceConvention, TaskEvaluator,
};
use crate::model::{Actu, AdamWConfig, ModelConfig};
use crate::task::Task;
use crate::xai::{ModelPredictor, Predictor};

use super::config::{resolve, ExperimentConfig, ScheduleConfig};
use super::dataset::{load_manifest, load_split};
use super::{load_run_model, RunPaths};

pub const MODEL_NAME: &str = "ACTU";
pub const CONSTANT_NAME: &str = "Constant";
pub const PERSISTENCE_NAME: &str = "Persistence";

/// Settings printed at the top of every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub run: String,
    pub task: Task,
    pub seed: u64,
    pub threshold: f64,
    pub persistence: PersistenceConvention,
    pub optimizer: AdamWConfig,
    pub schedule: ScheduleConfig,
    pub regression_loss: RegressionLossConfig,
    pub classification_loss: ComboLossConfig,
    pub model: ModelConfig,
}

impl ReportHeader {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            run: cfg.name.clone(),
            task: cfg.task,
            seed: cfg.seed,
            threshold: cfg.threshold,
            persistence: cfg.eval.persistence,
            optimizer: cfg.optimizer.clone(),
            schedule: cfg.schedule.clone(),
            regression_loss: cfg.loss.clone(),
            classification_loss: cfg.classification_loss.clone(),
            model: cfg.effective_model(),
        }
    }

    pub fn markdown(&self) -> String {
        let o = &self.optimizer;
        let s = &self.schedule;
        let mut m = String::new();
        let _ = writeln!(m, "- run: `{}`, task: {}, seed: {}, t = {}", self.run, self.task, self.seed, self.threshold);
        let _ = writeln!(
            m,
            "- optimizer: AdamW (beta1 {}, beta2 {}, eps {:e}, weight decay {}, grad clip {})",
            o.beta1,
            o.beta2,
            o.eps,
            o.weight_decay,
            o.max_grad_norm.map_or_else(|| "none".to_string(), |v| v.to_string())
        );
        let _ = writeln!(
            m,
            "- schedule: pretrain {} epochs @ {:e}, finetune {} epochs @ {:e}, cosine decay, warmup {}, batch {}",
            s.pretrain_epochs, s.pretrain_lr, s.finetune_epochs, s.finetune_lr, s.warmup_fraction, s.batch_size
        );
        let l = &self.regression_loss;
        let _ = writeln!(
            m,
            "- regression loss: Huber delta {}, scales {:?}, wavelet {:?} x{}, alpha_low {}, detail weights {:?}, alpha {}",
            l.huber_delta, l.scales, l.wavelet, l.wavelet_levels, l.alpha_low, l.detail_weights, l.alpha_total
        );
        let c = &self.classification_loss;
        let _ = writeln!(
            m,
            "- classification loss: {} x dice + {} x focal (gamma {})",
            c.dice_weight, c.focal_weight, c.focal_gamma
        );
        let _ = writeln!(m, "- persistence convention: {:?}", self.persistence);
        m
    }
}

/// Paired t-test of one model's per-sample scores against a baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model: String,
    pub baseline: String,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub mean_diff: f64,
    pub degenerate: bool,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub header: ReportHeader,
    pub checkpoint: String,
    pub reports: Vec<MetricReport>,
    pub comparisons: Vec<Comparison>,
    /// Per-sample headline scores by model.
    pub per_sample: BTreeMap<String, Vec<(String, f64)>>,
}

impl Evaluation {
    pub fn report(&self, model: &str) -> Option<&MetricReport> {
        self.reports.iter().find(|r| r.model == model)
    }

    pub fn comparison(&self, model: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.model == model)
    }

    pub fn markdown(&self) -> String {
        let mut m = format!("# Evaluation: {}\n\n{}\n", self.header.run, self.header.markdown());
        let Some(first) = self.reports.first() else {
            return m;
        };
        let keys: Vec<&str> = first.keys().collect();
        let _ = writeln!(m, "| model | {} | p vs {PERSISTENCE_NAME} |", keys.join(" | "));
        let _ = writeln!(m, "|---|{}---|", "---|".repeat(keys.len()));
        for r in &self.reports {
            let cells: Vec<String> = keys
                .iter()
                .map(|k| {
                    r.entries
                        .iter()
                        .find(|e| e.key == *k)
                        .map_or_else(|| "—".to_string(), |e| if e.undefined { "n/a".into() } else { format!("{:.4}", e.value) })
                })
                .collect();
            let p = self
                .comparison(&r.model)
                .map_or_else(|| "—".to_string(), |c| format!("{:.3e}{}", c.p, c.stars));
            let _ = writeln!(m, "| {} | {} | {} |", r.model, cells.join(" | "), p);
        }
        m.push_str("\n`*` marks p < 0.01 in a paired t-test over per-sample scores.\n");
        m
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for r in &self.reports {
            std::fs::write(dir.join(format!("{}.csv", r.model.to_ascii_lowercase())), r.to_csv())?;
        }
        std::fs::write(dir.join("evaluation.json"), serde_json::to_string_pretty(self)?)?;
        std::fs::write(dir.join("evaluation.md"), self.markdown())?;
        Ok(())
    }
}

/// Evaluates `model` and both baselines on `records`.
pub fn evaluate_prepared(
    cfg: &ExperimentConfig,
    model: &Actu,
    stats: &NormStats,
    records: &[SampleRecord],
    checkpoint: &str,
) -> Result<Evaluation> {
    let task = cfg.task;
    let predictor = ModelPredictor::new(model, cfg.eval.batch_size);
    let mut evals = [TaskEvaluator::new(task), TaskEvaluator::new(task), TaskEvaluator::new(task)];
    for chunk in records.chunks(cfg.eval.batch_size) {
        let inputs = chunk.iter().map(|r| standardize(r, stats)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<_> = inputs.iter().collect();
        let preds = predictor.predict(&refs)?;
        for (r, pred) in chunk.iter().zip(&preds) {
            evals[0].add(&r.id, pred, &r.targets)?;
            evals[1].add(&r.id, &constant_predict(task, r.targets.dim()), &r.targets)?;
            let pers = persistence_predict(&r.scene, task, cfg.threshold, cfg.eval.persistence)?;
            evals[2].add(&r.id, &pers, &r.targets)?;
        }
    }
    let names = [MODEL_NAME, CONSTANT_NAME, PERSISTENCE_NAME];
    let reports = evals.iter().zip(names).map(|(e, n)| e.report(n)).collect();
    let mut comparisons = Vec::new();
    for i in 0..2 {
        if let Ok(t) = compare_per_sample(evals[i].per_sample(), evals[2].per_sample()) {
            comparisons.push(Comparison {
                model: names[i].to_string(),
                baseline: PERSISTENCE_NAME.to_string(),
                t: t.t,
                df: t.df,
                p: t.p,
                mean_diff: t.mean_diff,
                degenerate: t.degenerate,
                stars: stars(t.p).to_string(),
            });
        }
    }
    let per_sample = evals.iter().zip(names).map(|(e, n)| (n.to_string(), e.per_sample().to_vec())).collect();
    Ok(Evaluation {
        header: ReportHeader::from_config(cfg),
        checkpoint: checkpoint.to_string(),
        reports,
        comparisons,
        per_sample,
    })
}

/// Loads the run's checkpoint, evaluates it on TEST and writes the
/// reports under `<output_dir>/eval`.
pub fn evaluate(cfg: &ExperimentConfig) -> Result<Evaluation> {
    let (model, stats, ckpt) = load_run_model(cfg)?;
    let manifest = load_manifest(cfg)?;
    let test = load_split(cfg, &manifest, Split::Test)?;
    if test.is_empty() {
        return Err(crate::Error::Config("dataset has no TEST samples".into()));
    }
    let name = ckpt.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let ev = evaluate_prepared(cfg, &model, &stats, &test, &name)?;
    ev.write(&RunPaths::new(&resolve(&cfg.output_dir)).eval)?;
    Ok(ev)
}
