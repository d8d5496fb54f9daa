//! RMSprop.
//!
//! Per element: `v ← ρ·v + (1−ρ)·g²` then `θ ← θ − η·g / (√v + ε)`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::tensor::ParamArrays;

pub const DEFAULT_RHO: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            learning_rate: 1e-4,
            rho: DEFAULT_RHO,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Optimizer constants plus one squared-gradient accumulator per parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub config: RmsPropConfig,
    accumulators: Vec<Vec<f64>>,
}

impl RmsPropState {
    /// Zeroed accumulators shaped like `params`.
    pub fn new<P: ParamArrays>(params: &P, config: RmsPropConfig) -> Result<Self> {
        if config.learning_rate.is_nan() || config.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                config.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&config.rho) || config.epsilon.is_nan() || config.epsilon < 0.0 {
            return Err(Error::Config(format!(
                "RMSprop needs 0 ≤ ρ < 1 and ε ≥ 0, got ρ={} ε={}",
                config.rho, config.epsilon
            )));
        }
        Ok(RmsPropState {
            config,
            accumulators: params.arrays().iter().map(|(_, a)| vec![0.0; a.len()]).collect(),
        })
    }

    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.accumulators
    }

    /// Applies one update in place.
    pub fn step<P: ParamArrays>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let RmsPropConfig {
            learning_rate,
            rho,
            epsilon,
        } = self.config;
        let grad_arrays = grads.arrays();
        let mut param_arrays = params.arrays_mut();
        ensure_dim("rmsprop_step", "parameter array count", self.accumulators.len(), param_arrays.len())?;
        ensure_dim("rmsprop_step", "gradient array count", self.accumulators.len(), grad_arrays.len())?;
        for (((name, theta), (_, g)), v) in param_arrays
            .iter_mut()
            .zip(grad_arrays.iter())
            .zip(self.accumulators.iter_mut())
        {
            if theta.len() != g.len() || theta.len() != v.len() {
                return Err(Error::InvalidArgument(format!(
                    "rmsprop_step: array {name} has {} parameters, {} gradients, {} accumulators",
                    theta.len(),
                    g.len(),
                    v.len()
                )));
            }
            for ((t, &gi), vi) in theta.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                *vi = rho * *vi + (1.0 - rho) * gi * gi;
                *t -= learning_rate * gi / (vi.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Functional form of [`RmsPropState::step`].
pub fn rmsprop_step<P: ParamArrays>(params: &mut P, grads: &P, state: &mut RmsPropState) -> Result<()> {
    state.step(params, grads)
}
