//! Input-ablation saliency: zero one standardized image channel (or the
//! DEM) in every timestep and measure the metric drop.

use candle_core::{DType, Device};
use serde::{Deserialize, Serialize};

use crate::data::{ModelInput, BAND_NAMES};
use crate::error::{Error, Result};
use crate::metrics::{Prediction, TaskEvaluator};
use crate::model::{Actu, ModelBatch};
use crate::raster::TargetPack;
use crate::task::Task;

/// Anything that maps standardized inputs to task predictions.
pub trait Predictor {
    fn task(&self) -> Task;
    fn uses_dem(&self) -> bool;
    fn predict(&self, inputs: &[&ModelInput]) -> Result<Vec<Prediction>>;
}

/// Frozen [`Actu`] evaluated in fixed-size batches.
pub struct ModelPredictor<'a> {
    pub model: &'a Actu,
    pub device: Device,
    pub dtype: DType,
    pub batch_size: usize,
}

impl<'a> ModelPredictor<'a> {
    pub fn new(model: &'a Actu, batch_size: usize) -> Self {
        Self {
            model,
            device: model.params().device().clone(),
            dtype: model.params().dtype(),
            batch_size: batch_size.max(1),
        }
    }
}

impl Predictor for ModelPredictor<'_> {
    fn task(&self) -> Task {
        self.model.config().task
    }

    fn uses_dem(&self) -> bool {
        self.model.config().use_dem
    }

    fn predict(&self, inputs: &[&ModelInput]) -> Result<Vec<Prediction>> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(self.batch_size) {
            let batch = ModelBatch::from_inputs(chunk, &self.device, self.dtype)?;
            let y = self.model.forward(&batch)?;
            out.extend(Actu::decode_output(self.task(), &y)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    Channel(usize),
    Dem,
}

/// Copy of `input` with the ablated modality set to zero.
pub fn ablate(input: &ModelInput, ablation: Ablation) -> Result<ModelInput> {
    let mut out = input.clone();
    match ablation {
        Ablation::Channel(c) => {
            let channels = input.images.dim().1;
            if c >= channels {
                return Err(Error::InvalidArgument(format!("channel {c} out of range for {channels} channels")));
            }
            out.images.index_axis_mut(ndarray::Axis(1), c).fill(0.0);
        }
        Ablation::Dem => match &mut out.dem {
            Some(d) => d.fill(0.0),
            None => return Err(Error::InvalidArgument("input has no DEM".into())),
        },
    }
    Ok(out)
}

pub struct EvalSample<'a> {
    pub id: &'a str,
    pub input: &'a ModelInput,
    pub targets: &'a TargetPack,
}

/// `samples x keys` metric values, each from a single-sample report.
pub fn per_sample_metrics(task: Task, preds: &[Prediction], samples: &[EvalSample], keys: &[&str]) -> Result<Vec<Vec<f64>>> {
    preds
        .iter()
        .zip(samples)
        .map(|(p, s)| {
            let mut ev = TaskEvaluator::new(task);
            ev.add(s.id, p, s.targets)?;
            let r = ev.report("");
            keys.iter()
                .map(|k| r.get(k).ok_or_else(|| Error::InvalidArgument(format!("metric {k:?} not reported for task {task}"))))
                .collect()
        })
        .collect()
}

fn mean_delta(base: &[Vec<f64>], ablated: &[Vec<f64>], keys: usize) -> Vec<f64> {
    let n = base.len().max(1) as f64;
    (0..keys)
        .map(|k| base.iter().zip(ablated).map(|(b, a)| b[k] - a[k]).sum::<f64>() / n)
        .collect()
}

/// Mean over samples of `metric(base) - metric(ablated)` for each key.
pub fn ablation_saliency(predictor: &dyn Predictor, samples: &[EvalSample], keys: &[&str], ablation: Ablation) -> Result<Vec<f64>> {
    let inputs: Vec<&ModelInput> = samples.iter().map(|s| s.input).collect();
    let base = per_sample_metrics(predictor.task(), &predictor.predict(&inputs)?, samples, keys)?;
    ablation_against(predictor, samples, keys, ablation, &base)
}

fn ablation_against(
    predictor: &dyn Predictor,
    samples: &[EvalSample],
    keys: &[&str],
    ablation: Ablation,
    base: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let ablated_inputs: Vec<ModelInput> = samples.iter().map(|s| ablate(s.input, ablation)).collect::<Result<_>>()?;
    let refs: Vec<&ModelInput> = ablated_inputs.iter().collect();
    let ablated = per_sample_metrics(predictor.task(), &predictor.predict(&refs)?, samples, keys)?;
    Ok(mean_delta(base, &ablated, keys.len()))
}

pub fn channel_saliency(predictor: &dyn Predictor, samples: &[EvalSample], keys: &[&str], channel: usize) -> Result<Vec<f64>> {
    ablation_saliency(predictor, samples, keys, Ablation::Channel(channel))
}

/// `None` when the predictor does not consume a DEM.
pub fn dem_saliency(predictor: &dyn Predictor, samples: &[EvalSample], keys: &[&str]) -> Result<Option<Vec<f64>>> {
    if !predictor.uses_dem() {
        return Ok(None);
    }
    ablation_saliency(predictor, samples, keys, Ablation::Dem).map(Some)
}

/// Metric-by-channel saliency matrix; the last column is the DEM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyReport {
    pub metrics: Vec<String>,
    pub channels: Vec<String>,
    /// `raw[m][c]`; `None` for a DEM column that does not apply.
    pub raw: Vec<Vec<Option<f64>>>,
}

/// Lower-is-better metrics, negated before row normalization.
pub fn lower_is_better(metric: &str) -> bool {
    metric.starts_with("MAE")
}

impl SaliencyReport {
    /// Row-normalized view; not-applicable cells count as 0.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        let rows: Vec<Vec<f64>> = self.raw.iter().map(|r| r.iter().map(|v| v.unwrap_or(0.0)).collect()).collect();
        let negate: Vec<bool> = self.metrics.iter().map(|m| lower_is_better(m)).collect();
        normalize_saliency_rows(&rows, &negate)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("metric,{}\n", self.channels.join(","));
        for (m, row) in self.metrics.iter().zip(&self.raw) {
            let cells: Vec<String> = row.iter().map(|v| v.map_or_else(|| "NA".into(), |x| format!("{x}"))).collect();
            s.push_str(&format!("{m},{}\n", cells.join(",")));
        }
        s
    }
}

/// Saliency of every image band and the DEM.
pub fn saliency_report(predictor: &dyn Predictor, samples: &[EvalSample], keys: &[&str]) -> Result<SaliencyReport> {
    let inputs: Vec<&ModelInput> = samples.iter().map(|s| s.input).collect();
    let base = per_sample_metrics(predictor.task(), &predictor.predict(&inputs)?, samples, keys)?;
    let channels = samples.first().map_or(BAND_NAMES.len(), |s| s.input.images.dim().1);
    let mut columns: Vec<Vec<Option<f64>>> = Vec::new();
    for c in 0..channels {
        columns.push(ablation_against(predictor, samples, keys, Ablation::Channel(c), &base)?.into_iter().map(Some).collect());
    }
    columns.push(if predictor.uses_dem() {
        ablation_against(predictor, samples, keys, Ablation::Dem, &base)?.into_iter().map(Some).collect()
    } else {
        vec![None; keys.len()]
    });
    let mut names: Vec<String> = (0..channels)
        .map(|c| BAND_NAMES.get(c).map_or_else(|| format!("ch{c}"), |n| n.to_string()))
        .collect();
    names.push("DEM".into());
    Ok(SaliencyReport {
        metrics: keys.iter().map(|k| k.to_string()).collect(),
        channels: names,
        raw: (0..keys.len()).map(|k| columns.iter().map(|col| col[k]).collect()).collect(),
    })
}

/// Divides each row by its largest absolute value, negating rows flagged in
/// `negate` first. All-zero rows are returned unchanged.
pub fn normalize_saliency_rows(rows: &[Vec<f64>], negate: &[bool]) -> Vec<Vec<f64>> {
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let sign = if negate.get(i).copied().unwrap_or(false) { -1.0 } else { 1.0 };
            let r: Vec<f64> = row.iter().map(|v| sign * v).collect();
            let max = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if max == 0.0 {
                row.clone()
            } else {
                r.iter().map(|v| v / max).collect()
            }
        })
        .collect()
}
