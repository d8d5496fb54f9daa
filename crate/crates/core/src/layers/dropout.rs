use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

/// Whether stochastic layers are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

/// Per-element multipliers of one inverted-dropout draw: `0` for dropped
/// units and `1/(1-ratio)` for survivors.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    factors: Vec<f64>,
}

impl DropoutMask {
    pub fn identity(len: usize) -> Self {
        DropoutMask {
            factors: vec![1.0; len],
        }
    }

    pub fn sample<R: Rng + ?Sized>(len: usize, ratio: f64, rng: &mut R) -> Result<Self> {
        check_ratio(ratio)?;
        if ratio == 0.0 {
            return Ok(DropoutMask::identity(len));
        }
        let keep = 1.0 / (1.0 - ratio);
        let factors = (0..len)
            .map(|_| if rng.random::<f64>() < ratio { 0.0 } else { keep })
            .collect();
        Ok(DropoutMask { factors })
    }

    pub fn from_factors(factors: Vec<f64>) -> Self {
        DropoutMask { factors }
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_dim("dropout", "input length", self.factors.len(), x.len())?;
        Ok(x.iter().zip(&self.factors).map(|(v, f)| v * f).collect())
    }

    /// Backward pass: the same mask and scale applied to the upstream gradient.
    pub fn backward(&self, grad: &[f64]) -> Result<Vec<f64>> {
        self.apply(grad)
    }
}

fn check_ratio(ratio: f64) -> Result<()> {
    if (0.0..1.0).contains(&ratio) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "dropout ratio must be in [0, 1), got {ratio}"
        )))
    }
}

/// Inverted dropout. In train mode the drawn mask is returned for the backward pass.
pub fn dropout<R: Rng + ?Sized>(
    x: &[f64],
    ratio: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Vec<f64>, Option<DropoutMask>)> {
    check_ratio(ratio)?;
    match mode {
        Mode::Infer => Ok((x.to_vec(), None)),
        Mode::Train => {
            let mask = DropoutMask::sample(x.len(), ratio, rng)?;
            Ok((mask.apply(x)?, Some(mask)))
        }
    }
}
