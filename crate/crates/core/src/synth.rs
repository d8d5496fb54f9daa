//! Seeded synthetic corridor with lane-correlated congestion.
//!
//! Speeds follow `u_f·bias_l·(1 − congestion)` plus Gaussian noise, where the
//! congestion term is a smooth rush-hour envelope that starts at the most
//! downstream detector and travels upstream as a backward wave, modulated by
//! a stop-and-go oscillation moving with it. Volumes come from the
//! Greenshields relation evaluated at the noise-free speed.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CorridorShape, LoopRecord};
use crate::error::{Error, Result};

/// Speeds are floored here so every generated value stays strictly positive.
pub const SPEED_FLOOR: f64 = 1.0;

const SECONDS_PER_DAY: i64 = 86_400;

/// A recurring congested period, in hours after midnight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakWindow {
    pub start_hour: f64,
    pub end_hour: f64,
    /// Fraction of free-flow speed lost at the height of the peak, in `[0, 1]`.
    pub severity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub shape: CorridorShape,
    pub days: usize,
    /// mph
    pub free_flow_speed: f64,
    /// vehicles per mile
    pub jam_density: f64,
    pub peaks: Vec<PeakWindow>,
    /// Per-lane speed multipliers, shoulder lane first. `None` spreads
    /// 0.9..=1.05 evenly so the median lane is fastest.
    pub lane_bias: Option<Vec<f64>>,
    /// Standard deviation of the speed noise, mph. Draws are clamped to ±5 sd.
    pub noise_sd: f64,
    /// Standard deviation of the volume noise, vehicles per interval.
    pub volume_noise_sd: f64,
    /// Speed at which congestion travels upstream, mph.
    pub wave_speed: f64,
    /// Distance between neighbouring detectors, miles.
    pub detector_spacing: f64,
    /// Duration of the smooth onset and recovery of each peak, hours.
    pub ramp_hours: f64,
    /// Depth of the stop-and-go modulation inside a peak, in `[0, 1]`.
    pub oscillation_amplitude: f64,
    pub oscillation_period_hours: f64,
    /// Each day shifts every peak by a uniform draw in ±this many hours.
    pub day_jitter_hours: f64,
    /// Each day scales every severity by a uniform draw in `[1 − this, 1]`.
    pub severity_jitter: f64,
    /// Epoch seconds of the first record; must be interval-aligned.
    pub start_timestamp: i64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            shape: CorridorShape::default(),
            days: 30,
            free_flow_speed: 60.0,
            jam_density: 200.0,
            peaks: vec![
                PeakWindow {
                    start_hour: 7.0,
                    end_hour: 9.5,
                    severity: 0.8,
                },
                PeakWindow {
                    start_hour: 16.0,
                    end_hour: 19.0,
                    severity: 0.9,
                },
            ],
            lane_bias: None,
            noise_sd: 4.0,
            volume_noise_sd: 10.0,
            wave_speed: 12.0,
            detector_spacing: 0.5,
            ramp_hours: 0.75,
            oscillation_amplitude: 0.5,
            oscillation_period_hours: 0.5,
            day_jitter_hours: 0.25,
            severity_jitter: 0.2,
            start_timestamp: 1_451_606_400,
            seed: 0,
        }
    }
}

/// Hourly flow `k_j·u·(1 − u/u_f)`, floored at zero.
pub fn greenshields_flow(speed: f64, free_flow_speed: f64, jam_density: f64) -> f64 {
    (jam_density * speed * (1.0 - speed / free_flow_speed)).max(0.0)
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

impl SynthConfig {
    pub fn lane_biases(&self) -> Vec<f64> {
        match &self.lane_bias {
            Some(b) => b.clone(),
            None if self.shape.c == 1 => vec![1.0],
            None => {
                let c = self.shape.c;
                (0..c).map(|l| (90.0 + 15.0 * l as f64 / (c - 1) as f64) / 100.0).collect()
            }
        }
    }

    pub fn steps_per_day(&self) -> usize {
        (SECONDS_PER_DAY / self.shape.interval) as usize
    }

    pub fn record_count(&self) -> usize {
        self.days * self.steps_per_day() * self.shape.cells()
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.days == 0 {
            return bad("synthetic corpus needs at least one day".into());
        }
        if SECONDS_PER_DAY % self.shape.interval != 0 {
            return bad(format!("interval {} does not divide a day", self.shape.interval));
        }
        if self.start_timestamp % self.shape.interval != 0 {
            return bad(format!(
                "start timestamp {} is not aligned to the {} s interval",
                self.start_timestamp, self.shape.interval
            ));
        }
        let positive = [
            ("free_flow_speed", self.free_flow_speed),
            ("jam_density", self.jam_density),
            ("wave_speed", self.wave_speed),
            ("detector_spacing", self.detector_spacing),
            ("ramp_hours", self.ramp_hours),
            ("oscillation_period_hours", self.oscillation_period_hours),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let non_negative = [
            ("noise_sd", self.noise_sd),
            ("volume_noise_sd", self.volume_noise_sd),
            ("day_jitter_hours", self.day_jitter_hours),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        for (name, v) in [
            ("oscillation_amplitude", self.oscillation_amplitude),
            ("severity_jitter", self.severity_jitter),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        for p in &self.peaks {
            if !(0.0..=1.0).contains(&p.severity) {
                return bad(format!("peak severity must lie in [0, 1], got {}", p.severity));
            }
            if !(p.start_hour.is_finite() && p.end_hour.is_finite() && p.start_hour < p.end_hour) {
                return bad(format!("peak window {}..{} is empty", p.start_hour, p.end_hour));
            }
        }
        let biases = self.lane_biases();
        if biases.len() != self.shape.c {
            return bad(format!("lane_bias has {} entries for {} lanes", biases.len(), self.shape.c));
        }
        if let Some(b) = biases.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return bad(format!("lane multipliers must be positive, got {b}"));
        }
        Ok(())
    }

    /// Congestion in `[0, 1]` at `hour` for 0-based `detector`, given the
    /// day's peak shifts and severity scale.
    fn congestion(&self, hour: f64, detector: usize, shifts: &[f64], scale: f64) -> f64 {
        let downstream = (self.shape.k - 1 - detector) as f64;
        let tau = hour - downstream * self.detector_spacing / self.wave_speed;
        let envelope = self
            .peaks
            .iter()
            .zip(shifts)
            .map(|(p, shift)| {
                let s = p.start_hour + shift;
                let e = p.end_hour + shift;
                p.severity
                    * smoothstep((tau - s) / self.ramp_hours)
                    * smoothstep((e - tau) / self.ramp_hours)
            })
            .fold(0.0, f64::max);
        let wave = 0.5 * (1.0 + (2.0 * PI * tau / self.oscillation_period_hours).sin());
        (scale * envelope * (1.0 - self.oscillation_amplitude * wave)).clamp(0.0, 1.0)
    }

    fn generate_day(&self, day: usize, biases: &[f64]) -> Vec<LoopRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(day as u64);
        let shifts: Vec<f64> = self
            .peaks
            .iter()
            .map(|_| rng.random_range(-1.0..=1.0) * self.day_jitter_hours)
            .collect();
        let scale = 1.0 - rng.random_range(0.0..=1.0) * self.severity_jitter;
        let speed_noise = Normal::new(0.0, self.noise_sd).expect("validated noise_sd");
        let volume_noise = Normal::new(0.0, self.volume_noise_sd).expect("validated volume_noise_sd");
        let interval = self.shape.interval;
        let per_hour = 3600.0 / interval as f64;
        let steps = self.steps_per_day();
        let mut out = Vec::with_capacity(steps * self.shape.cells());
        for step in 0..steps {
            let seconds = step as i64 * interval;
            let hour = seconds as f64 / 3600.0;
            let timestamp = self.start_timestamp + day as i64 * SECONDS_PER_DAY + seconds;
            for detector in 0..self.shape.k {
                let congestion = self.congestion(hour, detector, &shifts, scale);
                for (lane, bias) in biases.iter().enumerate() {
                    let base = self.free_flow_speed * bias * (1.0 - congestion);
                    let bound = 5.0 * self.noise_sd;
                    let noise = speed_noise.sample(&mut rng).clamp(-bound, bound);
                    let speed = (base + noise).max(SPEED_FLOOR);
                    let flow = greenshields_flow(base, self.free_flow_speed, self.jam_density) / per_hour;
                    let volume = (flow + volume_noise.sample(&mut rng)).max(0.0);
                    out.push(LoopRecord {
                        timestamp,
                        detector_index: detector + 1,
                        lane: lane + 1,
                        speed,
                        volume,
                    });
                }
            }
        }
        out
    }
}

/// Generates `days` of records ordered by timestamp, detector, lane.
///
/// Each day draws from its own ChaCha stream, so the output does not depend
/// on how days are scheduled across threads.
pub fn generate(config: &SynthConfig) -> Result<Vec<LoopRecord>> {
    config.validate()?;
    let biases = config.lane_biases();
    let days: Vec<Vec<LoopRecord>> = (0..config.days)
        .into_par_iter()
        .map(|d| config.generate_day(d, &biases))
        .collect();
    Ok(days.concat())
}
