//! Two-phase training (pretrain, then finetune) with checkpoints and a
//! JSON-lines epoch log.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::{DType, Device, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::augment::AffineSampler;
use crate::data::{ModelInput, NormStats, Split};
use crate::error::{Error, Result};
use crate::losses::{combo_classification_loss, total_regression_loss};
use crate::metrics::TaskEvaluator;
use crate::model::{load_checkpoint, save_checkpoint, Actu, AdamW, LrSchedule, ModelBatch};
use crate::ops;
use crate::task::Task;

use super::config::{resolve, ExperimentConfig};
use super::dataset::{load_manifest, load_split, prepare, task_labels, validation_split, warp, Prepared, TaskLabels};
use super::{headline_metric, RunPaths};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub phase: String,
    /// 1-based within the phase.
    pub epoch: usize,
    /// 1-based over all phases.
    pub global_epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_metric: Option<f64>,
    pub val_metric_name: String,
    pub lr_last: f64,
    pub grad_norm_mean: f64,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub best: PathBuf,
    pub last: PathBuf,
    pub epochs: Vec<EpochLog>,
    /// Epochs already complete when training resumed.
    pub resumed_epochs: usize,
}

/// Resume state stored in the `extra` field of each checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainState {
    pub phase_index: usize,
    /// Epochs completed within `phase_index`.
    pub phase_epoch: usize,
    pub global_epoch: usize,
    pub best_score: Option<f64>,
    pub best_epoch: Option<usize>,
    pub stats: NormStats,
    pub task: Task,
}

struct Phase {
    name: &'static str,
    data: Vec<Prepared>,
    epochs: usize,
    lr: f64,
}

fn derived_seed(seed: u64, tag: &str, a: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    h.update((a as u64).to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

/// Label tensors for a batch: `u8 [N, H, W]` classes, or `[N, 1, H, W]`
/// values with a 0/1 mask.
pub enum LabelBatch {
    Classes(Tensor),
    Values(Tensor, Tensor),
}

pub fn label_batch(labels: &[TaskLabels], device: &Device, dtype: DType) -> Result<LabelBatch> {
    let n = labels.len();
    match labels.first() {
        None => Err(Error::InvalidArgument("empty batch".into())),
        Some(TaskLabels::Classes(c)) => {
            let (h, w) = c.dim();
            let mut v = Vec::with_capacity(n * h * w);
            for l in labels {
                match l {
                    TaskLabels::Classes(c) => v.extend(c.iter().copied()),
                    TaskLabels::Values(..) => return Err(Error::InvalidArgument("mixed label kinds".into())),
                }
            }
            Ok(LabelBatch::Classes(Tensor::from_vec(v, (n, h, w), device)?))
        }
        Some(TaskLabels::Values(first, _)) => {
            let (h, w) = first.dim();
            let (mut v, mut m) = (Vec::with_capacity(n * h * w), Vec::with_capacity(n * h * w));
            for l in labels {
                match l {
                    TaskLabels::Values(x, ok) => {
                        v.extend(x.iter().copied());
                        m.extend(ok.iter().map(|&b| if b { 1.0 } else { 0.0 }));
                    }
                    TaskLabels::Classes(_) => return Err(Error::InvalidArgument("mixed label kinds".into())),
                }
            }
            Ok(LabelBatch::Values(
                Tensor::from_vec(v, (n, 1, h, w), device)?.to_dtype(dtype)?,
                Tensor::from_vec(m, (n, 1, h, w), device)?.to_dtype(dtype)?,
            ))
        }
    }
}

/// Task loss on a forward output.
pub fn task_loss(cfg: &ExperimentConfig, output: &Tensor, labels: &LabelBatch) -> Result<Tensor> {
    match labels {
        LabelBatch::Classes(l) => combo_classification_loss(output, l, &cfg.classification_loss),
        LabelBatch::Values(t, m) => total_regression_loss(output, t, Some(m), &cfg.loss),
    }
}

fn batch_of<'a>(items: impl Iterator<Item = &'a ModelInput>, device: &Device, dtype: DType) -> Result<ModelBatch> {
    let inputs: Vec<&ModelInput> = items.collect();
    ModelBatch::from_inputs(&inputs, device, dtype)
}

/// Mean loss and pooled headline metric over `data`, without augmentation.
pub fn validate(cfg: &ExperimentConfig, model: &Actu, data: &[Prepared]) -> Result<(f64, Option<f64>)> {
    let (dev, dtype) = (model.params().device().clone(), model.params().dtype());
    let task = model.config().task;
    let mut ev = TaskEvaluator::new(task);
    let (mut total, mut weight) = (0.0, 0.0);
    for chunk in data.chunks(cfg.eval.batch_size) {
        let batch = batch_of(chunk.iter().map(|p| &p.input), &dev, dtype)?;
        let out = model.forward(&batch)?;
        let labels: Vec<TaskLabels> = chunk.iter().map(|p| task_labels(task, &p.targets)).collect();
        match task_loss(cfg, &out, &label_batch(&labels, &dev, dtype)?) {
            Ok(l) => {
                total += ops::scalar(&l)? * chunk.len() as f64;
                weight += chunk.len() as f64;
            }
            Err(Error::EmptyLossSupport) => {}
            Err(e) => return Err(e),
        }
        for (p, pred) in chunk.iter().zip(Actu::decode_output(task, &out)?) {
            ev.add(&p.id, &pred, &p.targets)?;
        }
    }
    let report = ev.report("val");
    let metric = report.entries.iter().find(|e| e.key == headline_metric(task)).filter(|e| !e.undefined).map(|e| e.value);
    Ok((if weight > 0.0 { total / weight } else { f64::NAN }, metric))
}

fn write_dump(path: &Path, value: serde_json::Value) -> Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(&value)?)?;
    Ok(())
}

fn nonfinite_params(model: &Actu) -> Result<Vec<String>> {
    let mut bad = Vec::new();
    for (name, var) in model.params().named() {
        let s = ops::scalar(&var.as_tensor().abs()?.sum_all()?)?;
        if !s.is_finite() {
            bad.push(name.to_string());
        }
    }
    Ok(bad)
}

fn read_log(path: &Path) -> Result<Vec<EpochLog>> {
    if !path.is_file() {
        return Ok(Vec::new());
    }
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

fn write_log(path: &Path, entries: &[EpochLog]) -> Result<()> {
    let mut s = String::new();
    for e in entries {
        s.push_str(&serde_json::to_string(e)?);
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Runs the configured phases. Without `force`, an existing last
/// checkpoint in the output directory is resumed; with `force` training
/// restarts from scratch.
pub fn train(cfg: &ExperimentConfig, force: bool) -> Result<TrainSummary> {
    let paths = RunPaths::new(&resolve(&cfg.output_dir));
    std::fs::create_dir_all(&paths.checkpoints)?;
    if force {
        for p in [&paths.best, &paths.last, &paths.train_log, &paths.dump] {
            if p.exists() {
                std::fs::remove_file(p)?;
            }
        }
    }
    std::fs::write(&paths.config, cfg.to_toml()?)?;

    let manifest = load_manifest(cfg)?;
    let pretrain = load_split(cfg, &manifest, Split::Pretrain)?;
    let stats = NormStats::fit(&pretrain)?;
    for c in stats.zero_variance_channels() {
        log::warn!("channel {c} has zero variance in PRETRAIN; passed through unscaled");
    }
    let finetune = load_split(cfg, &manifest, Split::Finetune)?;
    let (ft_train, val) = validation_split(finetune, cfg.schedule.validation_fraction, cfg.seed);
    let phases = [
        Phase {
            name: "pretrain",
            data: prepare(&pretrain, &stats)?,
            epochs: cfg.schedule.pretrain_epochs,
            lr: cfg.schedule.pretrain_lr,
        },
        Phase {
            name: "finetune",
            data: prepare(&ft_train, &stats)?,
            epochs: cfg.schedule.finetune_epochs,
            lr: cfg.schedule.finetune_lr,
        },
    ];
    drop((pretrain, ft_train));
    let val = prepare(&val, &stats)?;
    if val.is_empty() {
        log::info!("no validation samples; best checkpoint chosen by training loss");
    }

    let device = Device::Cpu;
    let dtype = DType::F32;
    let model_cfg = cfg.effective_model();
    let task = model_cfg.task;

    let (model, mut opt, mut state) = if !force && paths.last.is_file() {
        let (m, o, meta) = load_checkpoint(&paths.last, Some(&model_cfg), dtype, &device)?;
        let st: TrainState = serde_json::from_value(meta.extra).map_err(|e| Error::Checkpoint(format!("bad train state: {e}")))?;
        if st.stats != stats {
            return Err(Error::Checkpoint("normalization statistics differ from the dataset; retrain with --force".into()));
        }
        log::info!("resuming after epoch {} ({} phase)", st.global_epoch, phases[st.phase_index.min(1)].name);
        (m, o, st)
    } else {
        let st = TrainState {
            phase_index: 0,
            phase_epoch: 0,
            global_epoch: 0,
            best_score: None,
            best_epoch: None,
            stats: stats.clone(),
            task,
        };
        (Actu::new(model_cfg.clone(), cfg.seed, dtype, &device)?, None, st)
    };
    let resumed_epochs = state.global_epoch;
    let mut log_entries = read_log(&paths.train_log)?;
    log_entries.truncate(resumed_epochs);
    write_log(&paths.train_log, &log_entries)?;

    let bs = cfg.schedule.batch_size;
    for (pi, phase) in phases.iter().enumerate() {
        if pi < state.phase_index || phase.epochs == 0 {
            continue;
        }
        if phase.data.is_empty() {
            log::info!("{} phase skipped: no samples", phase.name);
            continue;
        }
        if pi > state.phase_index {
            state.phase_index = pi;
            state.phase_epoch = 0;
        }
        if state.phase_epoch == 0 || opt.is_none() {
            opt = Some(AdamW::new(cfg.optimizer.clone()));
        }
        let steps_per_epoch = phase.data.len().div_ceil(bs);
        let schedule = LrSchedule::new(phase.lr, steps_per_epoch * phase.epochs, cfg.schedule.warmup_fraction);
        while state.phase_epoch < phase.epochs {
            let epoch = state.phase_epoch;
            let started = Instant::now();
            let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(cfg.seed, phase.name, epoch));
            let mut order: Vec<usize> = (0..phase.data.len()).collect();
            order.shuffle(&mut rng);
            let (mut total, mut count, mut norm_sum, mut steps, mut lr) = (0.0, 0usize, 0.0, 0usize, 0.0);
            for (b, idx) in order.chunks(bs).enumerate() {
                let step = epoch * steps_per_epoch + b;
                lr = schedule.lr(step);
                let mut inputs = Vec::with_capacity(idx.len());
                let mut labels = Vec::with_capacity(idx.len());
                for &i in idx {
                    let p = &phase.data[i];
                    let (h, w) = p.input.spatial_dim();
                    let sampler = AffineSampler::random(&cfg.augment, h, w, &mut rng);
                    let (inp, lab) = warp(&sampler, &p.input, &task_labels(task, &p.targets));
                    inputs.push(inp);
                    labels.push(lab);
                }
                let batch = batch_of(inputs.iter(), &device, dtype)?;
                let out = model.forward(&batch)?;
                let loss = match task_loss(cfg, &out, &label_batch(&labels, &device, dtype)?) {
                    Ok(l) => l,
                    Err(Error::EmptyLossSupport) => {
                        log::warn!("{} epoch {} step {b}: no labelled pixels, step skipped", phase.name, epoch + 1);
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let value = ops::scalar(&loss)?;
                if !value.is_finite() {
                    let ids: Vec<&str> = idx.iter().map(|&i| phase.data[i].id.as_str()).collect();
                    write_dump(
                        &paths.dump,
                        serde_json::json!({
                            "phase": phase.name,
                            "epoch": epoch + 1,
                            "step": b,
                            "lr": lr,
                            "loss": value.to_string(),
                            "batch": ids,
                            "nonfinite_params": nonfinite_params(&model)?,
                        }),
                    )?;
                    return Err(Error::NonFiniteLoss {
                        epoch: state.global_epoch + 1,
                        step: b,
                        dump: paths.dump.clone(),
                    });
                }
                let grads = loss.backward()?;
                norm_sum += opt.as_mut().expect("optimizer").update(model.params(), &grads, lr)?;
                total += value * idx.len() as f64;
                count += idx.len();
                steps += 1;
            }
            let train_loss = if count > 0 { total / count as f64 } else { f64::NAN };
            let (val_loss, val_metric) = if val.is_empty() {
                (None, None)
            } else {
                let (l, m) = validate(cfg, &model, &val)?;
                (l.is_finite().then_some(l), m)
            };
            state.phase_epoch += 1;
            state.global_epoch += 1;
            let score = val_loss.unwrap_or(train_loss);
            let improved = score.is_finite() && state.best_score.is_none_or(|b| score < b);
            if improved {
                state.best_score = Some(score);
                state.best_epoch = Some(state.global_epoch);
            }
            let extra = serde_json::to_value(&state)?;
            if improved {
                save_checkpoint(&paths.best, &model, opt.as_ref(), extra.clone())?;
            }
            save_checkpoint(&paths.last, &model, opt.as_ref(), extra)?;
            let entry = EpochLog {
                phase: phase.name.to_string(),
                epoch: state.phase_epoch,
                global_epoch: state.global_epoch,
                steps,
                train_loss,
                val_loss,
                val_metric,
                val_metric_name: headline_metric(task).to_string(),
                lr_last: lr,
                grad_norm_mean: if steps > 0 { norm_sum / steps as f64 } else { 0.0 },
            };
            let mut f = std::fs::OpenOptions::new().append(true).create(true).open(&paths.train_log)?;
            writeln!(f, "{}", serde_json::to_string(&entry)?)?;
            log::info!(
                "{} epoch {}/{}: loss {:.5}{} ({:.1}s)",
                phase.name,
                state.phase_epoch,
                phase.epochs,
                train_loss,
                val_loss.map_or(String::new(), |v| format!(", val {v:.5}")),
                started.elapsed().as_secs_f64()
            );
            log_entries.push(entry);
        }
    }
    if !paths.best.is_file() {
        return Err(Error::Config("no training epochs were run; check schedule epochs and split sizes".into()));
    }
    Ok(TrainSummary {
        best: paths.best,
        last: paths.last,
        epochs: log_entries,
        resumed_epochs,
    })
}
