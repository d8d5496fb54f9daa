//! Mini-batch RMSprop training of a [`LaneCnn`].

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{ensure_dim, Error, Result};
use crate::layers::Mode;
use crate::loss::{composite_loss, LossConfig, LossValue};
use crate::model::{LaneCnn, PredictionPair};
use crate::optim::{RmsPropConfig, RmsPropState, DEFAULT_EPSILON, DEFAULT_RHO};
use crate::tensor::ParamArrays;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of the volume term in the loss.
    pub lambda: f64,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Drives both the per-epoch shuffle and the dropout masks.
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.1,
            learning_rate: 1e-4,
            rho: DEFAULT_RHO,
            epsilon: DEFAULT_EPSILON,
            batch_size: 64,
            epochs: 20,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn loss(&self) -> LossConfig {
        LossConfig::new(self.lambda)
    }

    pub fn optimizer(&self) -> RmsPropConfig {
        RmsPropConfig {
            learning_rate: self.learning_rate,
            rho: self.rho,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !self.lambda.is_finite() {
            return Err(Error::Config(format!("λ must be finite, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Losses after one epoch, both measured with dropout disabled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when no test samples were supplied.
    pub test_loss: Option<f64>,
}

/// Loss of one prediction against a sample's targets. A prediction without
/// a volume half is scored on speed only.
pub fn sample_loss(pred: &PredictionPair, sample: &Sample, cfg: &LossConfig) -> Result<LossValue> {
    let target_q: &[f64] = if pred.pred_q.is_empty() { &[] } else { &sample.y_q };
    composite_loss(&pred.pred_u, &pred.pred_q, &sample.y_u, target_q, cfg)
}

/// Mean inference-mode loss over `samples`, summed in order.
pub fn mean_loss(network: &LaneCnn, samples: &[Sample], cfg: &LossConfig) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Data("cannot compute a loss over zero samples".into()));
    }
    let mut total = 0.0;
    for s in samples {
        let pred = network.predict(&s.x_u, &s.x_q)?;
        total += sample_loss(&pred, s, cfg)?.total;
    }
    Ok(total / samples.len() as f64)
}

fn check_samples(network: &LaneCnn, samples: &[Sample]) -> Result<()> {
    let shape = network.config().shape;
    let cells = shape.cells();
    for s in samples {
        for x in [&s.x_u, &s.x_q] {
            let (rows, cols, channels) = x.shape();
            ensure_dim("train", "sample detectors", shape.k, rows)?;
            ensure_dim("train", "sample history steps", shape.n, cols)?;
            ensure_dim("train", "sample lanes", shape.c, channels)?;
        }
        ensure_dim("train", "speed target length", cells, s.y_u.len())?;
        ensure_dim("train", "volume target length", cells, s.y_q.len())?;
    }
    Ok(())
}

fn zero(grads: &mut impl ParamArrays) {
    for (_, a) in grads.arrays_mut() {
        a.fill(0.0);
    }
}

/// Trains `network` in place and returns the loss after every epoch.
///
/// Each mini-batch gradient is the mean of the per-sample gradients. Any
/// non-finite loss or parameter aborts with [`Error::Numeric`].
pub fn train(network: &mut LaneCnn, train: &[Sample], test: &[Sample], cfg: &TrainConfig) -> Result<Vec<EpochLoss>> {
    cfg.validate()?;
    if cfg.epochs == 0 {
        return Ok(Vec::new());
    }
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    check_samples(network, train)?;
    check_samples(network, test)?;

    let loss_cfg = cfg.loss();
    let mut optimizer = RmsPropState::new(network.params(), cfg.optimizer())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut grads = network.params().zeros_like();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            zero(&mut grads);
            for &i in batch {
                let s = &train[i];
                let (pred, cache) = network.forward(&s.x_u, &s.x_q, Mode::Train, &mut rng)?;
                let loss = sample_loss(&pred, s, &loss_cfg)?;
                if !loss.total.is_finite() {
                    return Err(Error::Numeric(format!(
                        "training loss became {} in epoch {epoch}, batch {b}",
                        loss.total
                    )));
                }
                let cache = cache.expect("train mode returns a cache");
                network.backward_into(&cache, &loss.grad_u, &loss.grad_q, &mut grads)?;
            }
            grads.scale(1.0 / batch.len() as f64);
            optimizer.step(network.params_mut(), &grads)?;
        }
        if !network.params().all_finite() {
            return Err(Error::Numeric(format!("parameters became non-finite in epoch {epoch}")));
        }
        let train_loss = mean_loss(network, train, &loss_cfg)?;
        let test_loss = if test.is_empty() {
            None
        } else {
            Some(mean_loss(network, test, &loss_cfg)?)
        };
        if !train_loss.is_finite() || test_loss.is_some_and(|l| !l.is_finite()) {
            return Err(Error::Numeric(format!(
                "loss diverged in epoch {epoch}: train {train_loss}, test {test_loss:?}"
            )));
        }
        match test_loss {
            Some(t) => info!("epoch {epoch}/{}: train loss {train_loss:.6e}, test loss {t:.6e}", cfg.epochs),
            None => info!("epoch {epoch}/{}: train loss {train_loss:.6e}", cfg.epochs),
        }
        curve.push(EpochLoss {
            epoch,
            train_loss,
            test_loss,
        });
    }
    debug!("finished {} epochs", cfg.epochs);
    Ok(curve)
}
