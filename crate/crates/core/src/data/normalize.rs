use serde::{Deserialize, Serialize};

use super::records::LoopRecord;
use crate::error::{Error, Result};

/// Min-max bounds for speed and volume, in raw units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationParams {
    pub speed_min: f64,
    pub speed_max: f64,
    pub volume_min: f64,
    pub volume_max: f64,
}

fn check_range(quantity: &'static str, min: f64, max: f64) -> Result<()> {
    if min.is_finite() && max.is_finite() && max > min {
        Ok(())
    } else {
        Err(Error::Degenerate { quantity, min, max })
    }
}

/// `(value − min)/(max − min)`, clamped to `[0, 1]`.
pub fn normalize(value: f64, min: f64, max: f64) -> Result<f64> {
    check_range("value", min, max)?;
    Ok(((value - min) / (max - min)).clamp(0.0, 1.0))
}

pub fn denormalize(scaled: f64, min: f64, max: f64) -> Result<f64> {
    check_range("value", min, max)?;
    Ok(min + scaled * (max - min))
}

impl NormalizationParams {
    pub fn new(speed_min: f64, speed_max: f64, volume_min: f64, volume_max: f64) -> Result<Self> {
        let p = NormalizationParams {
            speed_min,
            speed_max,
            volume_min,
            volume_max,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_range("speed", self.speed_min, self.speed_max)?;
        check_range("volume", self.volume_min, self.volume_max)
    }

    pub fn speed(&self, raw: f64) -> f64 {
        ((raw - self.speed_min) / (self.speed_max - self.speed_min)).clamp(0.0, 1.0)
    }

    pub fn volume(&self, raw: f64) -> f64 {
        ((raw - self.volume_min) / (self.volume_max - self.volume_min)).clamp(0.0, 1.0)
    }

    pub fn raw_speed(&self, scaled: f64) -> f64 {
        self.speed_min + scaled * (self.speed_max - self.speed_min)
    }

    pub fn raw_volume(&self, scaled: f64) -> f64 {
        self.volume_min + scaled * (self.volume_max - self.volume_min)
    }
}

/// Fits bounds over the records whose timestamp lies in `train_range`
/// (`start..end`, end exclusive). Test-period records never influence the fit.
pub fn fit_normalization(
    records: &[LoopRecord],
    train_range: std::ops::Range<i64>,
) -> Result<NormalizationParams> {
    let mut it = records.iter().filter(|r| train_range.contains(&r.timestamp));
    let first = it
        .next()
        .ok_or_else(|| Error::Data(format!("no records in training range {train_range:?}")))?;
    let mut p = NormalizationParams {
        speed_min: first.speed,
        speed_max: first.speed,
        volume_min: first.volume,
        volume_max: first.volume,
    };
    for r in it {
        p.speed_min = p.speed_min.min(r.speed);
        p.speed_max = p.speed_max.max(r.speed);
        p.volume_min = p.volume_min.min(r.volume);
        p.volume_max = p.volume_max.max(r.volume);
    }
    p.validate()?;
    Ok(p)
}
