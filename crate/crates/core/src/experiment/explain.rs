//! Saliency and climate-subgroup explanations of a trained run.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{standardize, NormStats, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::metrics::TaskEvaluator;
use crate::model::Actu;
use crate::task::Task;
use crate::xai::{
    enumerate_subgroups, format_items, global_shapley, most_and_least_divergent, saliency_report, score_subgroups, variability_bins,
    welch_filter, Bin, EvalSample, Item, ModelPredictor, Predictor, SaliencyReport, ScoredSubgroup,
};

use super::config::{resolve, ExperimentConfig};
use super::dataset::{load_manifest, load_split};
use super::evaluate::ReportHeader;
use super::{headline_metric, load_run_model, plot, RunPaths};

/// Saliency rows used when the config names none.
pub fn default_saliency_metrics(task: Task) -> &'static [&'static str] {
    match task {
        Task::Change => &["NoCHG_F", "CHG_F"],
        Task::Direction => &["NEG_F", "NONE_F", "POS_F"],
        Task::Magnitude => &["MAE", "PC", "F@0.1"],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRow {
    pub itemset: String,
    pub size: usize,
    pub support: f64,
    pub divergence: Option<f64>,
    pub welch_p: Option<f64>,
    pub shapley: Vec<(String, f64)>,
}

/// The two items with the largest and the two with the smallest global
/// Shapley value for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MostLeastRow {
    pub task: Task,
    pub most: Vec<(String, f64)>,
    pub least: Vec<(String, f64)>,
}

impl MostLeastRow {
    pub const CSV_HEADER: &'static str = "task,most_1,most_1_value,most_2,most_2_value,least_1,least_1_value,least_2,least_2_value";

    pub fn from_global(task: Task, global: &[(String, f64)]) -> Self {
        let mut ranked = global.to_vec();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let most: Vec<_> = ranked.iter().take(2).cloned().collect();
        let rest = ranked.len().saturating_sub(most.len()).min(2);
        let least: Vec<_> = ranked.iter().rev().take(rest).cloned().collect();
        Self { task, most, least }
    }

    pub fn to_csv(&self) -> String {
        let mut cells = vec![self.task.to_string()];
        for side in [&self.most, &self.least] {
            for k in 0..2 {
                match side.get(k) {
                    Some((n, v)) => cells.extend([n.clone(), format!("{v:e}")]),
                    None => cells.extend([String::new(), String::new()]),
                }
            }
        }
        format!("{}\n{}\n", Self::CSV_HEADER, cells.join(","))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("most/least csv: {m}"));
        let mut lines = text.lines();
        if lines.next() != Some(Self::CSV_HEADER) {
            return Err(bad("missing header"));
        }
        let row = lines.next().ok_or_else(|| bad("missing row"))?;
        let c: Vec<&str> = row.split(',').collect();
        if c.len() != 9 {
            return Err(bad("expected 9 cells"));
        }
        let side = |from: usize| -> Result<Vec<(String, f64)>> {
            let mut out = Vec::new();
            for k in 0..2 {
                let (n, v) = (c[from + 2 * k], c[from + 2 * k + 1]);
                if !n.is_empty() {
                    out.push((n.to_string(), v.parse().map_err(|_| bad("bad value"))?));
                }
            }
            Ok(out)
        };
        Ok(Self {
            task: c[0].parse()?,
            most: side(1)?,
            least: side(5)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupAnalysis {
    pub metric: String,
    pub variables: Vec<String>,
    pub min_support: f64,
    pub rows: Vec<SubgroupRow>,
    pub global_shapley: Vec<(String, f64)>,
    pub most_least: MostLeastRow,
    pub most_divergent: Vec<SubgroupRow>,
    pub least_divergent: Vec<SubgroupRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub header: ReportHeader,
    pub saliency: SaliencyReport,
    pub saliency_normalized: Vec<Vec<f64>>,
    pub subgroups: Option<SubgroupAnalysis>,
    pub notice: Option<String>,
}

fn row_of(s: &ScoredSubgroup, names: &[String]) -> SubgroupRow {
    SubgroupRow {
        itemset: format_items(&s.subgroup.items, names),
        size: s.subgroup.members.len(),
        support: s.subgroup.support,
        divergence: s.divergence,
        welch_p: s.welch_p,
        shapley: s
            .subgroup
            .items
            .iter()
            .zip(&s.shapley)
            .map(|(i, v)| (format_items(&[*i], names), *v))
            .collect(),
    }
}

fn opt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:e}"))
}

pub fn subgroups_csv(rows: &[SubgroupRow]) -> String {
    let mut s = String::from("itemset,size,support,divergence,welch_p\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.itemset, r.size, r.support, opt_cell(r.divergence), opt_cell(r.welch_p));
    }
    s
}

/// Subgroup analysis over per-sample evaluators, one per record.
pub fn analyze_subgroups(cfg: &ExperimentConfig, records: &[SampleRecord], evaluators: &[TaskEvaluator]) -> Result<SubgroupAnalysis> {
    let windows: Vec<_> = records
        .iter()
        .map(|r| r.climate.as_ref().map(|c| &c.windows).ok_or_else(|| Error::InvalidArgument(format!("sample {} has no climate", r.id))))
        .collect::<Result<_>>()?;
    let names = cfg.data.synthetic.climate_vars.clone();
    let per_var: Vec<Vec<Bin>> = (0..names.len()).map(|v| variability_bins(&windows, v)).collect::<Result<_>>()?;
    let labels: Vec<Vec<Bin>> = (0..records.len()).map(|s| per_var.iter().map(|b| b[s]).collect()).collect();
    let key = headline_metric(cfg.task);
    let metric = |members: &[usize]| -> Option<f64> {
        let mut ev = TaskEvaluator::new(cfg.task);
        for &m in members {
            ev.merge(&evaluators[m]).ok()?;
        }
        ev.report("").entries.into_iter().find(|e| e.key == key).filter(|e| !e.undefined).map(|e| e.value)
    };
    let scores: Option<Vec<f64>> = evaluators.iter().map(|e| e.per_sample().first().map(|p| p.1)).collect();
    let groups = enumerate_subgroups(&labels, cfg.explain.min_support)?;
    let mut scored = score_subgroups(&labels, &groups, metric, scores.as_deref());
    if let Some(alpha) = cfg.explain.welch_alpha {
        scored = welch_filter(scored, alpha);
    }
    let global: Vec<(String, f64)> = global_shapley(&scored, cfg.explain.aggregation)
        .into_iter()
        .map(|(i, v): (Item, f64)| (format_items(&[i], &names), v))
        .collect();
    let (most, least) = most_and_least_divergent(&scored, cfg.explain.top_subgroups);
    Ok(SubgroupAnalysis {
        metric: key.to_string(),
        variables: names.clone(),
        min_support: cfg.explain.min_support,
        rows: scored.iter().map(|s| row_of(s, &names)).collect(),
        most_least: MostLeastRow::from_global(cfg.task, &global),
        global_shapley: global,
        most_divergent: most.into_iter().map(|s| row_of(s, &names)).collect(),
        least_divergent: least.into_iter().map(|s| row_of(s, &names)).collect(),
    })
}

/// Saliency and (when the model reads climate) subgroup analysis.
pub fn explain_records(cfg: &ExperimentConfig, model: &Actu, stats: &NormStats, records: &[SampleRecord]) -> Result<Explanation> {
    let inputs = records.iter().map(|r| standardize(r, stats)).collect::<Result<Vec<_>>>()?;
    let samples: Vec<EvalSample> = records
        .iter()
        .zip(&inputs)
        .map(|(r, i)| EvalSample {
            id: &r.id,
            input: i,
            targets: &r.targets,
        })
        .collect();
    let keys: Vec<&str> = if cfg.explain.saliency_metrics.is_empty() {
        default_saliency_metrics(cfg.task).to_vec()
    } else {
        cfg.explain.saliency_metrics.iter().map(String::as_str).collect()
    };
    let predictor = ModelPredictor::new(model, cfg.eval.batch_size);
    let saliency = saliency_report(&predictor, &samples, &keys)?;
    let (subgroups, notice) = if !model.config().use_climate {
        (None, Some("subgroup analysis skipped: model has no climate branch".to_string()))
    } else if records.iter().any(|r| r.climate.is_none()) {
        (None, Some("subgroup analysis skipped: samples without climate windows".to_string()))
    } else {
        let refs: Vec<_> = inputs.iter().collect();
        let preds = predictor.predict(&refs)?;
        let evaluators = records
            .iter()
            .zip(&preds)
            .map(|(r, p)| {
                let mut ev = TaskEvaluator::new(cfg.task);
                ev.add(&r.id, p, &r.targets)?;
                Ok(ev)
            })
            .collect::<Result<Vec<_>>>()?;
        (Some(analyze_subgroups(cfg, records, &evaluators)?), None)
    };
    Ok(Explanation {
        header: ReportHeader::from_config(cfg),
        saliency_normalized: saliency.normalized(),
        saliency,
        subgroups,
        notice,
    })
}

fn divergent_markdown(title: &str, rows: &[SubgroupRow]) -> String {
    let mut m = format!("| {title} | Divergence | Support |\n|---|---|---|\n");
    for r in rows {
        let _ = writeln!(m, "| {} | {} | {:.3} |", r.itemset, r.divergence.map_or_else(|| "—".into(), |d| format!("{d:+.4}")), r.support);
    }
    m
}

impl Explanation {
    pub fn markdown(&self) -> String {
        let mut m = format!("# Explanation: {}\n\n{}\n## Saliency (row-normalized)\n\n", self.header.run, self.header.markdown());
        let _ = writeln!(m, "| metric | {} |", self.saliency.channels.join(" | "));
        let _ = writeln!(m, "|---|{}", "---|".repeat(self.saliency.channels.len()));
        for ((metric, norm), raw) in self.saliency.metrics.iter().zip(&self.saliency_normalized).zip(&self.saliency.raw) {
            let cells: Vec<String> = norm
                .iter()
                .zip(raw)
                .map(|(n, r)| if r.is_some() { format!("{n:+.3}") } else { "N/A".into() })
                .collect();
            let _ = writeln!(m, "| {metric} | {} |", cells.join(" | "));
        }
        m.push('\n');
        if let Some(note) = &self.notice {
            let _ = writeln!(m, "{note}");
        }
        if let Some(s) = &self.subgroups {
            let _ = writeln!(m, "## Most / Least contributing items ({})\n", s.metric);
            m.push_str("| task | Most | Least |\n|---|---|---|\n");
            let fmt = |v: &[(String, f64)]| v.iter().map(|(n, x)| format!("{n} ({x:+.4})")).collect::<Vec<_>>().join(", ");
            let _ = writeln!(m, "| {} | {} | {} |\n", s.most_least.task, fmt(&s.most_least.most), fmt(&s.most_least.least));
            m.push_str(&divergent_markdown("Most Divergent Subgroup", &s.most_divergent));
            m.push('\n');
            m.push_str(&divergent_markdown("Least Divergent Subgroup", &s.least_divergent));
        }
        m
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("saliency.csv"), self.saliency.to_csv())?;
        let norm = SaliencyReport {
            raw: self.saliency_normalized.iter().map(|r| r.iter().map(|v| Some(*v)).collect()).collect(),
            ..self.saliency.clone()
        };
        std::fs::write(dir.join("saliency_normalized.csv"), norm.to_csv())?;
        plot::save_png(&plot::heatmap(&self.saliency_normalized, 24), &dir.join("saliency_heatmap.png"))?;
        if let Some(s) = &self.subgroups {
            std::fs::write(dir.join("subgroups.csv"), subgroups_csv(&s.rows))?;
            std::fs::write(dir.join("most_least.csv"), s.most_least.to_csv())?;
        }
        std::fs::write(dir.join("explanation.json"), serde_json::to_string_pretty(self)?)?;
        std::fs::write(dir.join("explanation.md"), self.markdown())?;
        Ok(())
    }
}

/// Explains the run's checkpoint on TEST and writes under
/// `<output_dir>/explain`.
pub fn explain(cfg: &ExperimentConfig) -> Result<Explanation> {
    let (model, stats, _) = load_run_model(cfg)?;
    let manifest = load_manifest(cfg)?;
    let test = load_split(cfg, &manifest, Split::Test)?;
    if test.is_empty() {
        return Err(Error::Config("dataset has no TEST samples".into()));
    }
    let ex = explain_records(cfg, &model, &stats, &test)?;
    if let Some(n) = &ex.notice {
        log::warn!("{n}");
    }
    ex.write(&RunPaths::new(&resolve(&cfg.output_dir)).explain)?;
    Ok(ex)
}
