//! Merges the evaluations of several runs into one set of tables and plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::task::Task;

use super::config::{resolve, ExperimentConfig};
use super::evaluate::Evaluation;
use super::explain::Explanation;
use super::plot;
use super::train::EpochLog;
use super::headline_metric;

pub const MISSING: &str = "—";

#[derive(Debug, Clone)]
pub struct ReportSummary {
    pub runs: Vec<String>,
    /// Rows of the merged table (one per run and model).
    pub rows: usize,
    pub files: Vec<PathBuf>,
}

/// One evaluated run found under the results directory.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub label: String,
    pub root: PathBuf,
    pub evaluation: Evaluation,
}

fn find_evaluations(dir: &Path, skip: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p == skip {
            continue;
        }
        if p.is_dir() {
            find_evaluations(&p, skip, out)?;
        } else if p.file_name().is_some_and(|n| n == "evaluation.json") && p.parent().and_then(Path::file_name).is_some_and(|n| n == "eval") {
            out.push(p);
        }
    }
    Ok(())
}

/// Every `<run>/eval/evaluation.json` below `dir`, sorted by path.
pub fn collect_runs(dir: &Path, skip: &Path) -> Result<Vec<RunResult>> {
    if !dir.is_dir() {
        return Err(Error::Config(format!("results directory {} does not exist", dir.display())));
    }
    let mut files = Vec::new();
    find_evaluations(dir, skip, &mut files)?;
    files
        .into_iter()
        .map(|f| {
            let root = f.parent().and_then(Path::parent).expect("eval dir has a parent").to_path_buf();
            let label = root.strip_prefix(dir).unwrap_or(&root).to_string_lossy().replace('\\', "/");
            let label = if label.is_empty() { ".".to_string() } else { label };
            let evaluation: Evaluation = serde_json::from_str(&std::fs::read_to_string(&f)?)?;
            Ok(RunResult { label, root, evaluation })
        })
        .collect()
}

/// Rows `(row label, task, cells)` and the merged column set; a metric a
/// row lacks is rendered as [`MISSING`].
pub fn merged_table(runs: &[RunResult]) -> (Vec<String>, Vec<(String, Task, Vec<String>)>) {
    let mut columns: Vec<String> = Vec::new();
    for r in runs {
        for rep in &r.evaluation.reports {
            for k in rep.keys() {
                if !columns.iter().any(|c| c == k) {
                    columns.push(k.to_string());
                }
            }
        }
    }
    let mut rows = Vec::new();
    for r in runs {
        for rep in &r.evaluation.reports {
            let cells = columns
                .iter()
                .map(|c| {
                    rep.entries
                        .iter()
                        .find(|e| &e.key == c)
                        .map_or_else(|| MISSING.to_string(), |e| if e.undefined { "n/a".into() } else { format!("{:.4}", e.value) })
                })
                .collect();
            rows.push((format!("{}/{}", r.label, rep.model), rep.task, cells));
        }
    }
    (columns, rows)
}

fn read_log(path: &Path) -> Vec<EpochLog> {
    std::fs::read_to_string(path)
        .map(|t| t.lines().filter_map(|l| serde_json::from_str(l).ok()).collect())
        .unwrap_or_default()
}

/// Merges every evaluated run below `cfg.report.results_dir` and writes
/// `report.md`, `report.csv` and the plots to `cfg.report.output_dir`.
pub fn report(cfg: &ExperimentConfig) -> Result<ReportSummary> {
    let results = resolve(&cfg.report.results_dir);
    let out = resolve(&cfg.report.output_dir);
    let runs = collect_runs(&results, &out)?;
    if runs.is_empty() {
        return Err(Error::Config(format!("no evaluated runs under {}", results.display())));
    }
    std::fs::create_dir_all(&out)?;
    let mut files = Vec::new();
    let (columns, rows) = merged_table(&runs);

    let mut csv = format!("run_model,task,{}\n", columns.join(","));
    for (label, task, cells) in &rows {
        let _ = writeln!(csv, "{label},{task},{}", cells.join(","));
    }
    let csv_path = out.join("report.csv");
    std::fs::write(&csv_path, csv)?;
    files.push(csv_path);

    let mut md = String::from("# Results\n\n");
    for r in &runs {
        let _ = writeln!(md, "## Run `{}`\n\n{}", r.label, r.evaluation.header.markdown());
    }
    md.push_str("## Metrics\n\n");
    let _ = writeln!(md, "| run/model | task | {} |", columns.join(" | "));
    let _ = writeln!(md, "|---|---|{}", "---|".repeat(columns.len()));
    for (label, task, cells) in &rows {
        let _ = writeln!(md, "| {label} | {task} | {} |", cells.join(" | "));
    }

    let logs: Vec<(String, Vec<EpochLog>)> = runs
        .iter()
        .map(|r| (r.label.clone(), read_log(&r.root.join("train_log.jsonl"))))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    if !logs.is_empty() {
        let series: Vec<Vec<(f64, f64)>> = logs
            .iter()
            .map(|(_, l)| l.iter().map(|e| (e.global_epoch as f64, e.train_loss)).collect())
            .collect();
        let path = out.join("loss_curves.png");
        plot::save_png(&plot::line_chart(&series, 640, 400), &path)?;
        files.push(path);
        md.push_str("\n## Plots\n\n`loss_curves.png`: training loss per epoch; ");
        let legend: Vec<String> = logs
            .iter()
            .enumerate()
            .map(|(i, (l, _))| format!("{} = {}", plot::PALETTE_NAMES[i % plot::PALETTE_NAMES.len()], l))
            .collect();
        let _ = writeln!(md, "{}.\n", legend.join(", "));
    }

    let mut by_task: BTreeMap<String, Vec<&RunResult>> = BTreeMap::new();
    for r in &runs {
        by_task.entry(r.evaluation.header.task.to_string()).or_default().push(r);
    }
    for (task, group) in &by_task {
        let key = headline_metric(group[0].evaluation.header.task);
        let models: Vec<String> = group[0].evaluation.reports.iter().map(|r| r.model.clone()).collect();
        let bars: Vec<Vec<f64>> = group
            .iter()
            .map(|r| models.iter().map(|m| r.evaluation.report(m).and_then(|rep| rep.get(key)).unwrap_or(f64::NAN)).collect())
            .collect();
        let name = format!("metric_bars_{}.png", task.to_ascii_lowercase());
        let path = out.join(&name);
        plot::save_png(&plot::bar_chart(&bars, 640, 400), &path)?;
        files.push(path);
        let legend: Vec<String> = models
            .iter()
            .enumerate()
            .map(|(i, m)| format!("{} = {m}", plot::PALETTE_NAMES[i % plot::PALETTE_NAMES.len()]))
            .collect();
        let runs_in: Vec<&str> = group.iter().map(|r| r.label.as_str()).collect();
        let _ = writeln!(md, "`{name}`: {key} per run ({}), bars {}.\n", runs_in.join(", "), legend.join(", "));
    }

    for r in &runs {
        let ex_path = r.root.join("explain").join("explanation.json");
        let Ok(text) = std::fs::read_to_string(&ex_path) else {
            continue;
        };
        let ex: Explanation = serde_json::from_str(&text)?;
        let name = format!("saliency_heatmap_{}.png", r.label.replace(['/', '.'], "_"));
        let path = out.join(&name);
        plot::save_png(&plot::heatmap(&ex.saliency_normalized, 24), &path)?;
        files.push(path);
        let _ = writeln!(
            md,
            "`{name}`: rows {}; columns {}; red positive, blue negative.\n",
            ex.saliency.metrics.join(", "),
            ex.saliency.channels.join(", ")
        );
    }

    let md_path = out.join("report.md");
    std::fs::write(&md_path, md)?;
    files.push(md_path);
    Ok(ReportSummary {
        runs: runs.iter().map(|r| r.label.clone()).collect(),
        rows: rows.len(),
        files,
    })
}
