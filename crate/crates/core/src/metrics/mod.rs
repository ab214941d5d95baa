//! Evaluation metrics, baselines and significance testing.
//!
//! Classification rates are percentages in `[0, 100]`; regression errors are
//! in target units. Everything is pooled micro over all evaluated pixels of a
//! split, and per-sample scores are kept alongside for the paired t-test.

mod baselines;
mod confusion;
mod regression;
mod ttest;

pub use baselines::{constant_predict, persistence_delta, persistence_predict, PersistenceConvention, Prediction};
pub use confusion::{ClassScores, ConfusionAccumulator};
pub use regression::{mae, mae_at_top, pearson, threshold_confusion, thresholded_metrics, RegressionAccumulator};
pub use ttest::{paired_ttest, stars, welch_ttest, TTestResult};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{change, Direction, TargetPack};
use crate::shape_err;
use crate::task::Task;

/// Thresholds for `P@t`, `R@t`, `F@t` on regressed magnitudes.
pub const REGRESSION_THRESHOLDS: [f64; 2] = [0.1, 0.2];
/// Fractions for `MAE@10` and `MAE@20`.
pub const TOP_FRACTIONS: [(f64, &str); 2] = [(0.1, "MAE@10"), (0.2, "MAE@20")];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub key: String,
    pub value: f64,
    /// The value is a 0 placeholder for an undefined quantity.
    #[serde(default)]
    pub undefined: bool,
}

/// Flat, ordered key/value table for one model on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub task: Task,
    pub entries: Vec<MetricEntry>,
}

impl MetricReport {
    pub fn new(model: impl Into<String>, task: Task) -> Self {
        Self {
            model: model.into(),
            task,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, key: impl Into<String>, value: f64, undefined: bool) {
        self.entries.push(MetricEntry {
            key: key.into(),
            value,
            undefined,
        });
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.key == key).map(|e| e.value)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.key.as_str())
    }

    /// `key,value,undefined` rows after a `model`/`task` preamble.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("key,value,undefined\n");
        let _ = writeln!(s, "model,{},false", self.model);
        let _ = writeln!(s, "task,{},false", self.task);
        for e in &self.entries {
            let _ = writeln!(s, "{},{},{}", e.key, e.value, e.undefined);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidArgument(format!("metric csv: {m}"));
        let mut lines = text.lines();
        if lines.next() != Some("key,value,undefined") {
            return Err(bad("missing header".into()));
        }
        let mut model = None;
        let mut task = None;
        let mut entries = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let parts: Vec<&str> = line.splitn(3, ',').collect();
            let [key, value, undefined] = parts[..] else {
                return Err(bad(format!("malformed row {line:?}")));
            };
            match key {
                "model" => model = Some(value.to_string()),
                "task" => task = Some(value.parse::<Task>()?),
                _ => entries.push(MetricEntry {
                    key: key.to_string(),
                    value: value.parse().map_err(|_| bad(format!("bad value in {line:?}")))?,
                    undefined: undefined.parse().map_err(|_| bad(format!("bad flag in {line:?}")))?,
                }),
            }
        }
        Ok(Self {
            model: model.ok_or_else(|| bad("missing model".into()))?,
            task: task.ok_or_else(|| bad("missing task".into()))?,
            entries,
        })
    }
}

/// F1 of one class in one sample, counting "absent from both" as a perfect
/// 100 so that samples without that class do not penalize a correct model.
fn sample_f1(acc: &ConfusionAccumulator, class: usize) -> f64 {
    let s = acc.scores(class);
    let predicted: u64 = (0..acc.classes()).map(|g| acc.count(g, class)).sum();
    if s.support == 0 && predicted == 0 {
        100.0
    } else {
        s.f1
    }
}

/// Streams predictions for one task and produces a [`MetricReport`] plus
/// per-sample scores.
///
/// Per-sample scores: CHG F1 for change, mean of NEG and POS F1 for
/// direction (higher is better); MAE for magnitude (lower is better).
#[derive(Debug, Clone)]
pub struct TaskEvaluator {
    task: Task,
    confusion: ConfusionAccumulator,
    regression: RegressionAccumulator,
    thresholded: Vec<ConfusionAccumulator>,
    per_sample: Vec<(String, f64)>,
    samples: usize,
}

impl TaskEvaluator {
    pub fn new(task: Task) -> Self {
        let classes = match task {
            Task::Change => 2,
            Task::Direction => 3,
            Task::Magnitude => 2,
        };
        Self {
            task,
            confusion: ConfusionAccumulator::new(classes),
            regression: RegressionAccumulator::new(),
            thresholded: REGRESSION_THRESHOLDS.iter().map(|_| ConfusionAccumulator::new(2)).collect(),
            per_sample: Vec::new(),
            samples: 0,
        }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn add(&mut self, id: &str, pred: &Prediction, targets: &TargetPack) -> Result<()> {
        if pred.dim() != targets.dim() {
            return Err(shape_err!("prediction {:?} vs target {:?}", pred.dim(), targets.dim()));
        }
        self.samples += 1;
        match (self.task, pred) {
            (Task::Change | Task::Direction, Prediction::Classes(p)) => {
                let gt = self.task.labels(targets).expect("classification task");
                let (p, g) = (p.iter().copied().collect::<Vec<_>>(), gt.iter().copied().collect::<Vec<_>>());
                let mut local = ConfusionAccumulator::new(self.confusion.classes());
                local.add(&p, &g)?;
                if local.total() > 0 {
                    let score = if self.task == Task::Change {
                        sample_f1(&local, change::CHANGE as usize)
                    } else {
                        0.5 * (sample_f1(&local, Direction::Neg as usize) + sample_f1(&local, Direction::Pos as usize))
                    };
                    self.per_sample.push((id.to_string(), score));
                }
                self.confusion.merge(&local)?;
            }
            (Task::Magnitude, Prediction::Values(p)) => {
                let (gt, valid) = self.task.regression_target(targets).expect("regression task");
                let p: Vec<f64> = p.iter().copied().collect();
                let g: Vec<f64> = gt.iter().copied().collect();
                let v: Vec<bool> = valid.iter().copied().collect();
                let mut local = RegressionAccumulator::new();
                local.add(&p, &g, &v)?;
                if let Some(m) = local.mae() {
                    self.per_sample.push((id.to_string(), m));
                }
                self.regression.merge(&local);
                for (acc, &t) in self.thresholded.iter_mut().zip(&REGRESSION_THRESHOLDS) {
                    acc.merge(&threshold_confusion(&p, &g, &v, t)?)?;
                }
            }
            _ => {
                return Err(Error::InvalidArgument(format!("prediction kind does not match task {}", self.task)));
            }
        }
        Ok(())
    }

    /// Pools another evaluator's pixels and per-sample scores into this one.
    pub fn merge(&mut self, other: &TaskEvaluator) -> Result<()> {
        if other.task != self.task {
            return Err(Error::InvalidArgument(format!("cannot merge {} into {}", other.task, self.task)));
        }
        self.confusion.merge(&other.confusion)?;
        self.regression.merge(&other.regression);
        for (a, b) in self.thresholded.iter_mut().zip(&other.thresholded) {
            a.merge(b)?;
        }
        self.per_sample.extend(other.per_sample.iter().cloned());
        self.samples += other.samples;
        Ok(())
    }

    /// Per-sample scores in insertion order, keyed by sample id.
    pub fn per_sample(&self) -> &[(String, f64)] {
        &self.per_sample
    }

    pub fn report(&self, model: &str) -> MetricReport {
        let mut r = MetricReport::new(model, self.task);
        match self.task {
            Task::Change | Task::Direction => {
                for (c, name) in self.task.class_names().iter().enumerate() {
                    let s = self.confusion.scores(c);
                    r.push(format!("{name}_P"), s.precision, s.undefined);
                    r.push(format!("{name}_R"), s.recall, s.undefined);
                    r.push(format!("{name}_F"), s.f1, s.undefined);
                }
                if self.task == Task::Direction {
                    let neg = self.confusion.scores(Direction::Neg as usize);
                    let pos = self.confusion.scores(Direction::Pos as usize);
                    r.push("NEG_POS_mean_F", 0.5 * (neg.f1 + pos.f1), neg.undefined || pos.undefined);
                }
                r.push("n_pixels", self.confusion.total() as f64, false);
            }
            Task::Magnitude => {
                let mae = self.regression.mae();
                r.push("MAE", mae.unwrap_or(0.0), mae.is_none());
                for (f, key) in TOP_FRACTIONS {
                    let v = self.regression.mae_at_top(f).ok();
                    r.push(key, v.unwrap_or(0.0), v.is_none());
                }
                let pc = self.regression.pearson();
                r.push("PC", pc.unwrap_or(0.0), pc.is_none());
                for (acc, t) in self.thresholded.iter().zip(REGRESSION_THRESHOLDS) {
                    let s = acc.scores(1);
                    r.push(format!("P@{t}"), s.precision, s.undefined);
                    r.push(format!("R@{t}"), s.recall, s.undefined);
                    r.push(format!("F@{t}"), s.f1, s.undefined);
                }
                r.push("n_pixels", self.regression.len() as f64, false);
            }
        }
        r.push("n_samples", self.samples as f64, false);
        r
    }
}

/// Aligns two per-sample score lists by id and runs [`paired_ttest`].
pub fn compare_per_sample(a: &[(String, f64)], b: &[(String, f64)]) -> Result<TTestResult> {
    let lookup: std::collections::HashMap<&str, f64> = b.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .iter()
        .filter_map(|(k, v)| lookup.get(k.as_str()).map(|w| (*v, *w)))
        .unzip();
    paired_ttest(&xs, &ys)
}
