//! The forecasting network: per-image feature pyramid, optional climate
//! branch with gated fusion, per-level ConvLSTM over time, and a UNet
//! decoder with a task head.

mod backbone;
mod checkpoint;
mod climate;
mod convlstm;
mod decoder;
mod fusion;
mod layers;
mod optim;
mod params;

pub use backbone::{level_dims, Backbone, BackboneKind, ConvNextLike, TinyConvPyramid, STEM_STRIDE};
pub use checkpoint::{load_checkpoint, read_checkpoint_meta, save_checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use climate::{upsample_stages, ClimateEncoder};
pub use convlstm::ConvLstmCell;
pub use decoder::Decoder;
pub use fusion::GatedFusion;
pub use layers::{gelu, ChannelNorm, Conv2d, Linear, Lstm};
pub use optim::{AdamW, AdamWConfig, LrSchedule};
pub use params::{Init, ParamStore};

use candle_core::{DType, Device, Tensor};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::ModelInput;
use crate::error::{Error, Result};
use crate::ops;
use crate::shape_err;
use crate::task::Task;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone: BackboneKind,
    pub use_dem: bool,
    pub use_climate: bool,
    /// Pyramid levels `L`.
    pub levels: usize,
    /// Series length `T`.
    pub series_len: usize,
    /// Months per climate window `T1`.
    pub climate_months: usize,
    /// Climate variables `C1`.
    pub climate_vars: usize,
    pub task: Task,
    /// Width of the decoder stages above the shallowest level.
    pub head_channels: usize,
    pub image_channels: usize,
    pub height: usize,
    pub width: usize,
    /// Per-level widths; the backbone default when absent.
    pub channels: Option<Vec<usize>>,
    /// Blocks per level for ConvNeXt-style backbones.
    pub depths: Option<Vec<usize>>,
    pub climate_hidden: usize,
    /// Bottleneck width `D` of the climate projection.
    pub climate_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneKind::TinyConvPyramid,
            use_dem: true,
            use_climate: true,
            levels: 4,
            series_len: 5,
            climate_months: 12,
            climate_vars: 5,
            task: Task::Change,
            head_channels: 16,
            image_channels: 6,
            height: 64,
            width: 64,
            channels: None,
            depths: None,
            climate_hidden: 64,
            climate_dim: 64,
        }
    }
}

impl ModelConfig {
    pub fn level_channels(&self) -> Vec<usize> {
        let c = self.channels.clone().unwrap_or_else(|| self.backbone.default_channels());
        c.into_iter().take(self.levels).collect()
    }

    pub fn level_depths(&self) -> Vec<usize> {
        let d = self.depths.clone().unwrap_or_else(|| self.backbone.default_depths());
        d.into_iter().take(self.levels).collect()
    }

    /// Channels entering the backbone: bands plus the DEM when used.
    pub fn input_channels(&self) -> usize {
        self.image_channels + usize::from(self.use_dem)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.levels < 2 {
            return bad(format!("need at least 2 pyramid levels, got {}", self.levels));
        }
        let ch = self.level_channels();
        if ch.len() < self.levels {
            return bad(format!("{} channel widths for {} levels", ch.len(), self.levels));
        }
        if ch.windows(2).any(|w| w[0] > w[1]) || ch.contains(&0) {
            return bad(format!("level channels must be positive and nondecreasing, got {ch:?}"));
        }
        if self.level_depths().len() < self.levels {
            return bad(format!("need one depth per level, got {:?}", self.level_depths()));
        }
        let deepest = STEM_STRIDE << (self.levels - 1);
        if self.height < deepest || self.width < deepest {
            return bad(format!(
                "{}x{} input too small for {} levels (needs {deepest})",
                self.height, self.width, self.levels
            ));
        }
        if self.series_len == 0 || self.image_channels == 0 || self.head_channels == 0 {
            return bad("series length, image channels and head channels must be positive".into());
        }
        if self.use_climate && (self.climate_months == 0 || self.climate_vars == 0 || self.climate_hidden == 0 || self.climate_dim == 0) {
            return bad("climate dimensions must be positive".into());
        }
        Ok(())
    }
}

/// A batch of standardized inputs as tensors.
#[derive(Debug, Clone)]
pub struct ModelBatch {
    /// `[N, T, C, H, W]`.
    pub images: Tensor,
    /// `[N, 1, H, W]`.
    pub dem: Option<Tensor>,
    /// `[N, T, T1, C1]`.
    pub climate: Option<Tensor>,
}

impl ModelBatch {
    pub fn from_inputs(inputs: &[&ModelInput], device: &Device, dtype: DType) -> Result<Self> {
        let first = inputs.first().ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        let (t, c, h, w) = first.images.dim();
        let mut images = Vec::with_capacity(inputs.len() * t * c * h * w);
        for inp in inputs {
            if inp.images.dim() != (t, c, h, w) {
                return Err(shape_err!("batch images {:?} vs {:?}", inp.images.dim(), (t, c, h, w)));
            }
            images.extend(inp.images.iter().copied());
        }
        let images = Tensor::from_vec(images, (inputs.len(), t, c, h, w), device)?.to_dtype(dtype)?;
        let dem = if inputs.iter().all(|i| i.dem.is_some()) {
            let mut v = Vec::with_capacity(inputs.len() * h * w);
            for inp in inputs {
                let d = inp.dem.as_ref().expect("checked");
                if d.dim() != (h, w) {
                    return Err(shape_err!("dem {:?} vs images {:?}", d.dim(), (h, w)));
                }
                v.extend(d.iter().copied());
            }
            Some(Tensor::from_vec(v, (inputs.len(), 1, h, w), device)?.to_dtype(dtype)?)
        } else {
            None
        };
        let climate = if inputs.iter().all(|i| i.climate.is_some()) {
            let dims = first.climate.as_ref().expect("checked").dim();
            let mut v = Vec::new();
            for inp in inputs {
                let cl = inp.climate.as_ref().expect("checked");
                if cl.dim() != dims {
                    return Err(shape_err!("climate {:?} vs {:?}", cl.dim(), dims));
                }
                v.extend(cl.iter().copied());
            }
            Some(Tensor::from_vec(v, (inputs.len(), dims.0, dims.1, dims.2), device)?.to_dtype(dtype)?)
        } else {
            None
        };
        Ok(Self { images, dem, climate })
    }
}

/// Intermediate values of one forward pass.
pub struct ForwardTrace {
    /// Per level `[N, T, C_l, H_l, W_l]` image features.
    pub image_levels: Vec<Tensor>,
    /// Per level `[N, T, C_l, H_l, W_l]` climate maps.
    pub climate_levels: Option<Vec<Tensor>>,
    /// Per level gates, same shapes as the features.
    pub gates: Option<Vec<Tensor>>,
    pub fused_levels: Vec<Tensor>,
    /// Per level `[N, C_l, H_l, W_l]` temporal summaries.
    pub summaries: Vec<Tensor>,
    /// `[N, out, H, W]`, after the task activation.
    pub output: Tensor,
}

/// The full network together with its parameters.
pub struct Actu {
    cfg: ModelConfig,
    params: ParamStore,
    backbone: Box<dyn Backbone>,
    climate: Option<ClimateEncoder>,
    fusion: Vec<GatedFusion>,
    temporal: Vec<ConvLstmCell>,
    decoder: Decoder,
}

impl Actu {
    pub fn new(cfg: ModelConfig, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        cfg.validate()?;
        let mut ps = ParamStore::new(seed, dtype, device.clone());
        let channels = cfg.level_channels();
        let backbone: Box<dyn Backbone> = match cfg.backbone {
            BackboneKind::TinyConvPyramid => Box::new(TinyConvPyramid::new(&mut ps, "backbone", cfg.input_channels(), &channels)?),
            BackboneKind::ConvnextLikeBase | BackboneKind::ConvnextLikeLarge => Box::new(ConvNextLike::new(
                &mut ps,
                "backbone",
                cfg.input_channels(),
                &channels,
                &cfg.level_depths(),
            )?),
        };
        let dims = level_dims(cfg.height, cfg.width, cfg.levels);
        let (climate, fusion) = if cfg.use_climate {
            let shapes: Vec<_> = channels.iter().zip(&dims).map(|(&c, &(h, w))| (c, h, w)).collect();
            let enc = ClimateEncoder::new(&mut ps, "climate", cfg.climate_vars, cfg.climate_hidden, cfg.climate_dim, &shapes)?;
            let fusion = channels
                .iter()
                .enumerate()
                .map(|(l, &c)| GatedFusion::new(&mut ps, &format!("fusion.l{l}"), c))
                .collect::<Result<_>>()?;
            (Some(enc), fusion)
        } else {
            (None, Vec::new())
        };
        let temporal = channels
            .iter()
            .enumerate()
            .map(|(l, &c)| ConvLstmCell::new(&mut ps, &format!("temporal.l{l}"), c, c))
            .collect::<Result<_>>()?;
        let decoder = Decoder::new(&mut ps, "decoder", &channels, cfg.head_channels, cfg.task.output_channels())?;
        Ok(Self {
            cfg,
            params: ps,
            backbone,
            climate,
            fusion,
            temporal,
            decoder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn fusion(&self) -> &[GatedFusion] {
        &self.fusion
    }

    pub fn climate_encoder(&self) -> Option<&ClimateEncoder> {
        self.climate.as_ref()
    }

    /// `[N, T, C, H, W]` + `[N, 1, H, W]` -> `[N, T, C+1, H, W]`, the DEM
    /// repeated in every timestep.
    pub fn attach_dem(images: &Tensor, dem: &Tensor) -> Result<Tensor> {
        let (n, t, _, h, w) = images.dims5()?;
        if dem.dims() != [n, 1, h, w] {
            return Err(shape_err!("dem {:?} vs images {:?}", dem.dims(), images.dims()));
        }
        let rep = dem.unsqueeze(1)?.broadcast_as((n, t, 1, h, w))?.contiguous()?;
        Ok(Tensor::cat(&[images, &rep], 2)?)
    }

    /// Shared-weight backbone over every timestep: per level
    /// `[N, T, C_l, H_l, W_l]`.
    pub fn encode_images(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let (n, t, c, h, w) = x.dims5()?;
        let flat = x.reshape((n * t, c, h, w))?;
        self.backbone
            .forward(&flat)?
            .into_iter()
            .map(|f| {
                let (_, cl, hl, wl) = f.dims4()?;
                Ok(f.reshape((n, t, cl, hl, wl))?)
            })
            .collect()
    }

    /// Climate maps per level, `[N, T, C_l, H_l, W_l]`.
    pub fn encode_climate(&self, windows: &Tensor) -> Result<Vec<Tensor>> {
        let enc = self
            .climate
            .as_ref()
            .ok_or_else(|| Error::Config("model was built without the climate branch".into()))?;
        let (n, t, t1, c1) = windows.dims4()?;
        if (t1, c1) != (self.cfg.climate_months, self.cfg.climate_vars) || t != self.cfg.series_len {
            return Err(shape_err!(
                "climate windows {:?}, expected [N, {}, {}, {}]",
                windows.dims(),
                self.cfg.series_len,
                self.cfg.climate_months,
                self.cfg.climate_vars
            ));
        }
        enc.forward(&windows.reshape((n * t, t1, c1))?)?
            .into_iter()
            .map(|k| {
                let (_, cl, hl, wl) = k.dims4()?;
                Ok(k.reshape((n, t, cl, hl, wl))?)
            })
            .collect()
    }

    pub fn forward_trace(&self, batch: &ModelBatch) -> Result<ForwardTrace> {
        let (n, t, c, h, w) = batch.images.dims5()?;
        if c != self.cfg.image_channels || t != self.cfg.series_len {
            return Err(shape_err!(
                "images {:?}, expected [N, {}, {}, H, W]",
                batch.images.dims(),
                self.cfg.series_len,
                self.cfg.image_channels
            ));
        }
        let x = if self.cfg.use_dem {
            let dem = batch
                .dem
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("model uses a DEM but the batch has none".into()))?;
            Self::attach_dem(&batch.images, dem)?
        } else {
            batch.images.clone()
        };
        let image_levels = self.encode_images(&x)?;
        let (climate_levels, gates, fused_levels) = if self.cfg.use_climate {
            let windows = batch
                .climate
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("model uses climate but the batch has none".into()))?;
            let k = self.encode_climate(windows)?;
            let mut gates = Vec::new();
            let mut fused = Vec::new();
            for ((img, clim), gf) in image_levels.iter().zip(&k).zip(&self.fusion) {
                let (_, _, cl, hl, wl) = img.dims5()?;
                let (f, a) = gf.forward(&img.reshape((n * t, cl, hl, wl))?, &clim.reshape((n * t, cl, hl, wl))?)?;
                fused.push(f.reshape((n, t, cl, hl, wl))?);
                gates.push(a.reshape((n, t, cl, hl, wl))?);
            }
            (Some(k), Some(gates), fused)
        } else {
            (None, None, image_levels.clone())
        };
        let summaries = fused_levels
            .iter()
            .zip(&self.temporal)
            .map(|(f, cell)| Ok(cell.run(f)?.0))
            .collect::<Result<Vec<_>>>()?;
        let raw = self.decoder.forward(&summaries, h, w)?;
        let output = match self.cfg.task {
            Task::Magnitude => raw.abs()?,
            Task::Change | Task::Direction => raw,
        };
        Ok(ForwardTrace {
            image_levels,
            climate_levels,
            gates,
            fused_levels,
            summaries,
            output,
        })
    }

    /// `[N, out, H, W]`: logits for classification, nonnegative values in
    /// normalized units (`|T| / 2`) for magnitude.
    pub fn forward(&self, batch: &ModelBatch) -> Result<Tensor> {
        Ok(self.forward_trace(batch)?.output)
    }

    /// Per-sample class maps or magnitudes (in target units) from a forward
    /// output.
    pub fn decode_output(task: Task, output: &Tensor) -> Result<Vec<crate::metrics::Prediction>> {
        let (n, c, h, w) = output.dims4()?;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let o = output.get(i)?;
            let pred = match task {
                Task::Change => {
                    let v = ops::to_f64_vec(&o)?;
                    crate::metrics::Prediction::Classes(Array2::from_shape_fn((h, w), |(y, x)| u8::from(v[y * w + x] > 0.0)))
                }
                Task::Direction => {
                    let v = ops::to_f64_vec(&o)?;
                    crate::metrics::Prediction::Classes(Array2::from_shape_fn((h, w), |(y, x)| {
                        let at = |k: usize| v[k * h * w + y * w + x];
                        (0..c).fold(0, |best, k| if at(k) > at(best) { k } else { best }) as u8
                    }))
                }
                Task::Magnitude => {
                    let v = ops::to_f64_vec(&o)?;
                    crate::metrics::Prediction::Values(Array2::from_shape_fn((h, w), |(y, x)| 2.0 * v[y * w + x]))
                }
            };
            out.push(pred);
        }
        Ok(out)
    }
}
