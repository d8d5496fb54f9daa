//! The two-stream network and its single-stream ablation.
//!
//! Per stream: three (valid conv → Relu) layers. The flattened stream
//! outputs pass through dropout, are concatenated, go through one hidden
//! dense layer with Relu, a second dropout, and a linear output layer whose
//! first `k·c` entries are speeds and the remaining `k·c` volumes.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::config::{ArchitectureConfig, Topology};
use super::params::ModelParams;
use crate::error::{ensure_dim, Error, Result};
use crate::layers::{
    concat, conv2d_backward_into, conv2d_valid, dense_backward_into, dense_forward, relu,
    relu_backward, relu_tensor, DropoutMask, Mode,
};
use crate::tensor::{FilterBank, LaneTensor, ParamArrays};

/// Normalized predictions for the next step, each laid out detector-major
/// with lane innermost. `pred_q` is empty for the single-stream variant.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionPair {
    pub pred_u: Vec<f64>,
    pub pred_q: Vec<f64>,
}

/// One draw of every dropout mask in the network.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub speed: DropoutMask,
    pub volume: Option<DropoutMask>,
    pub hidden: DropoutMask,
}

#[derive(Debug, Clone)]
struct StreamCache {
    /// Input of each conv layer followed by the last Relu output.
    maps: Vec<LaneTensor>,
}

/// Activations retained by a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    params_version: u64,
    network_id: u64,
    speed: StreamCache,
    volume: Option<StreamCache>,
    masks: DropoutMasks,
    fused: Vec<f64>,
    hidden: Vec<f64>,
    hidden_dropped: Vec<f64>,
}

impl ForwardCache {
    pub fn masks(&self) -> &DropoutMasks {
        &self.masks
    }
}

static NEXT_NETWORK_ID: AtomicU64 = AtomicU64::new(1);

/// A configured network with its parameters.
#[derive(Debug)]
pub struct LaneCnn {
    config: ArchitectureConfig,
    params: ModelParams,
    id: u64,
    version: u64,
}

impl Clone for LaneCnn {
    fn clone(&self) -> Self {
        LaneCnn {
            config: self.config.clone(),
            params: self.params.clone(),
            id: NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed),
            version: 0,
        }
    }
}

impl PartialEq for LaneCnn {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

impl LaneCnn {
    /// Builds a freshly initialized network.
    pub fn new(config: ArchitectureConfig) -> Result<Self> {
        let params = ModelParams::init(&config)?;
        Self::from_params(config, params)
    }

    /// The speed-only ablation of `config`: same stream, no volume stream or fusion.
    pub fn single_stream(config: &ArchitectureConfig) -> Result<Self> {
        Self::new(ArchitectureConfig {
            topology: Topology::SingleStream,
            ..config.clone()
        })
    }

    pub fn from_params(config: ArchitectureConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        params.check_against(&config)?;
        Ok(LaneCnn {
            config,
            params,
            id: NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed),
            version: 0,
        })
    }

    pub fn config(&self) -> &ArchitectureConfig {
        &self.config
    }

    pub fn topology(&self) -> Topology {
        self.config.topology
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Mutable access; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut ModelParams {
        self.version += 1;
        &mut self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    fn check_inputs(&self, x_u: &LaneTensor, x_q: &LaneTensor) -> Result<()> {
        let s = self.config.shape;
        let want = (s.k, s.n, s.c);
        for (name, x) in [("speed input", x_u), ("volume input", x_q)] {
            if name == "volume input" && !self.config.has_volume_stream() {
                continue;
            }
            let got = x.shape();
            if got != want {
                let (dimension, e, a) = if got.0 != want.0 {
                    ("rows (detectors)", want.0, got.0)
                } else if got.1 != want.1 {
                    ("cols (time steps)", want.1, got.1)
                } else {
                    ("channels (lanes)", want.2, got.2)
                };
                return Err(Error::Shape {
                    context: if name == "speed input" { "forward: speed input" } else { "forward: volume input" },
                    dimension,
                    expected: e,
                    actual: a,
                });
            }
        }
        Ok(())
    }

    /// Draws fresh dropout masks for one train-mode pass.
    pub fn sample_masks<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DropoutMasks> {
        let cfg = &self.config;
        Ok(DropoutMasks {
            speed: DropoutMask::sample(cfg.speed_flat_len(), cfg.dropout_conv, rng)?,
            volume: if cfg.has_volume_stream() {
                Some(DropoutMask::sample(cfg.volume_flat_len(), cfg.dropout_conv, rng)?)
            } else {
                None
            },
            hidden: DropoutMask::sample(cfg.fc_hidden, cfg.dropout_fc, rng)?,
        })
    }

    /// Masks that keep every unit, i.e. inference behavior.
    pub fn identity_masks(&self) -> DropoutMasks {
        let cfg = &self.config;
        DropoutMasks {
            speed: DropoutMask::identity(cfg.speed_flat_len()),
            volume: cfg.has_volume_stream().then(|| DropoutMask::identity(cfg.volume_flat_len())),
            hidden: DropoutMask::identity(cfg.fc_hidden),
        }
    }

    /// Forward pass. Train mode samples dropout masks from `rng` and returns
    /// the cache needed by [`LaneCnn::backward`]; infer mode is deterministic
    /// and returns no cache.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        x_u: &LaneTensor,
        x_q: &LaneTensor,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(PredictionPair, Option<ForwardCache>)> {
        match mode {
            Mode::Infer => Ok((self.predict(x_u, x_q)?, None)),
            Mode::Train => {
                let masks = self.sample_masks(rng)?;
                let (pred, cache) = self.forward_with_masks(x_u, x_q, masks)?;
                Ok((pred, Some(cache)))
            }
        }
    }

    /// Inference-mode forward pass.
    pub fn predict(&self, x_u: &LaneTensor, x_q: &LaneTensor) -> Result<PredictionPair> {
        self.check_inputs(x_u, x_q)?;
        let speed = run_stream(&self.params.speed_stream, x_u)?;
        let volume = if self.config.has_volume_stream() {
            Some(run_stream(&self.params.volume_stream, x_q)?)
        } else {
            None
        };
        let fused = match &volume {
            Some(v) => concat(speed.as_slice(), v.as_slice()),
            None => speed.into_vec(),
        };
        let hidden = relu(&dense_forward(&fused, &self.params.fc_hidden)?);
        let out = dense_forward(&hidden, &self.params.output)?;
        Ok(self.split_output(out))
    }

    /// Train-mode forward pass with caller-supplied masks, so a loss can be
    /// evaluated repeatedly under one frozen draw.
    pub fn forward_with_masks(
        &self,
        x_u: &LaneTensor,
        x_q: &LaneTensor,
        masks: DropoutMasks,
    ) -> Result<(PredictionPair, ForwardCache)> {
        self.check_inputs(x_u, x_q)?;
        let speed = run_stream_cached(&self.params.speed_stream, x_u)?;
        let speed_out = masks.speed.apply(speed.maps[3].as_slice())?;
        let (volume, fused) = match (&masks.volume, self.config.has_volume_stream()) {
            (Some(mask), true) => {
                let v = run_stream_cached(&self.params.volume_stream, x_q)?;
                let v_out = mask.apply(v.maps[3].as_slice())?;
                let fused = concat(&speed_out, &v_out);
                (Some(v), fused)
            }
            (None, false) => (None, speed_out),
            _ => {
                return Err(Error::InvalidArgument(
                    "dropout masks do not match the network topology".into(),
                ))
            }
        };
        let hidden = relu(&dense_forward(&fused, &self.params.fc_hidden)?);
        let hidden_dropped = masks.hidden.apply(&hidden)?;
        let out = dense_forward(&hidden_dropped, &self.params.output)?;
        let cache = ForwardCache {
            params_version: self.version,
            network_id: self.id,
            speed,
            volume,
            masks,
            fused,
            hidden,
            hidden_dropped,
        };
        Ok((self.split_output(out), cache))
    }

    fn split_output(&self, mut out: Vec<f64>) -> PredictionPair {
        let cells = self.config.shape.cells();
        let pred_q = if out.len() > cells { out.split_off(cells) } else { Vec::new() };
        PredictionPair { pred_u: out, pred_q }
    }

    /// Exact parameter gradients for the pass recorded in `cache`.
    pub fn backward(&self, cache: &ForwardCache, grad_u: &[f64], grad_q: &[f64]) -> Result<ModelParams> {
        let mut grads = self.params.zeros_like();
        self.backward_into(cache, grad_u, grad_q, &mut grads)?;
        Ok(grads)
    }

    /// Like [`LaneCnn::backward`] but adds into existing gradient arrays.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        grad_u: &[f64],
        grad_q: &[f64],
        grads: &mut ModelParams,
    ) -> Result<()> {
        if cache.network_id != self.id || cache.params_version != self.version {
            return Err(Error::StaleCache(
                "cache was produced by a different network or before a parameter update".into(),
            ));
        }
        let cells = self.config.shape.cells();
        ensure_dim("backward", "speed gradient length", cells, grad_u.len())?;
        let grad_out = if self.config.has_volume_stream() {
            ensure_dim("backward", "volume gradient length", cells, grad_q.len())?;
            concat(grad_u, grad_q)
        } else {
            if !grad_q.is_empty() {
                return Err(Error::shape("backward", "volume gradient length", 0, grad_q.len()));
            }
            grad_u.to_vec()
        };
        let p = &self.params;

        let grad_hidden_dropped = dense_backward_into(&cache.hidden_dropped, &p.output, &grad_out, &mut grads.output, true)?
            .expect("input gradient requested");
        let grad_hidden = cache.masks.hidden.backward(&grad_hidden_dropped)?;
        let grad_pre_hidden = relu_backward(&cache.hidden, &grad_hidden)?;
        let grad_fused = dense_backward_into(&cache.fused, &p.fc_hidden, &grad_pre_hidden, &mut grads.fc_hidden, true)?
            .expect("input gradient requested");

        let split = self.config.speed_flat_len();
        let grad_speed = cache.masks.speed.backward(&grad_fused[..split])?;
        stream_backward(&p.speed_stream, &cache.speed, grad_speed, &mut grads.speed_stream)?;
        if let (Some(vc), Some(mask)) = (&cache.volume, &cache.masks.volume) {
            let grad_volume = mask.backward(&grad_fused[split..])?;
            stream_backward(&p.volume_stream, vc, grad_volume, &mut grads.volume_stream)?;
        }
        Ok(())
    }
}

fn run_stream(banks: &[FilterBank], x: &LaneTensor) -> Result<LaneTensor> {
    let mut a = relu_tensor(&conv2d_valid(x, &banks[0])?);
    for bank in &banks[1..] {
        a = relu_tensor(&conv2d_valid(&a, bank)?);
    }
    Ok(a)
}

fn run_stream_cached(banks: &[FilterBank], x: &LaneTensor) -> Result<StreamCache> {
    let mut maps = Vec::with_capacity(banks.len() + 1);
    maps.push(x.clone());
    for bank in banks {
        let next = relu_tensor(&conv2d_valid(maps.last().unwrap(), bank)?);
        maps.push(next);
    }
    Ok(StreamCache { maps })
}

fn stream_backward(
    banks: &[FilterBank],
    cache: &StreamCache,
    grad_flat: Vec<f64>,
    grads: &mut [FilterBank],
) -> Result<()> {
    let last = &cache.maps[banks.len()];
    let (r, c, ch) = last.shape();
    let mut grad = LaneTensor::from_vec(r, c, ch, grad_flat)?;
    for layer in (0..banks.len()).rev() {
        let out = &cache.maps[layer + 1];
        let gated = relu_backward(out.as_slice(), grad.as_slice())?;
        let (gr, gc, gch) = out.shape();
        let grad_pre = LaneTensor::from_vec(gr, gc, gch, gated)?;
        let want_input = layer > 0;
        let gi = conv2d_backward_into(&cache.maps[layer], &banks[layer], &grad_pre, &mut grads[layer], want_input)?;
        if let Some(gi) = gi {
            grad = gi;
        }
    }
    Ok(())
}
