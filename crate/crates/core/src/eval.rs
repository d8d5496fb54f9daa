//! Accuracy metric, recursive multi-step rollout, and horizon evaluation.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{NormalizationParams, Sample};
use crate::error::{ensure_dim, Error, Result};
use crate::io::write_atomic;
use crate::model::{Forecaster, PredictionPair};
use crate::train::EpochLoss;

/// Targets below this speed (mph) are left out of the accuracy mean.
pub const MIN_TARGET_SPEED: f64 = 1.0;

/// How prediction error becomes an accuracy percentage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMetric {
    /// `100·(1 − mean |ŷ − y| / y)`.
    #[default]
    MapeComplement,
    /// `100·(1 − sqrt(mean ((ŷ − y) / y)²))`.
    RmsePercent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyStats {
    pub percent: f64,
    /// Elements that entered the mean.
    pub counted: usize,
    /// Elements skipped because the target was below [`MIN_TARGET_SPEED`].
    pub excluded: usize,
}

/// Running sums for one accuracy figure.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct ErrorSums {
    abs: f64,
    sq: f64,
    counted: usize,
    excluded: usize,
}

impl ErrorSums {
    fn add(&mut self, pred: f64, truth: f64) {
        if truth < MIN_TARGET_SPEED {
            self.excluded += 1;
            return;
        }
        let rel = (pred - truth) / truth;
        self.abs += rel.abs();
        self.sq += rel * rel;
        self.counted += 1;
    }

    fn finish(&self, metric: AccuracyMetric) -> Option<AccuracyStats> {
        if self.counted == 0 {
            return None;
        }
        let n = self.counted as f64;
        let err = match metric {
            AccuracyMetric::MapeComplement => self.abs / n,
            AccuracyMetric::RmsePercent => (self.sq / n).sqrt(),
        };
        Some(AccuracyStats {
            percent: 100.0 * (1.0 - err),
            counted: self.counted,
            excluded: self.excluded,
        })
    }
}

/// Accuracy of raw-unit speed predictions under `metric`.
pub fn accuracy_with(pred: &[f64], target: &[f64], metric: AccuracyMetric) -> Result<AccuracyStats> {
    ensure_dim("accuracy", "prediction length", target.len(), pred.len())?;
    let mut sums = ErrorSums::default();
    for (&p, &t) in pred.iter().zip(target) {
        sums.add(p, t);
    }
    sums.finish(metric).ok_or_else(|| {
        Error::Numeric(format!(
            "accuracy is undefined: all {} targets are below {MIN_TARGET_SPEED} mph",
            target.len()
        ))
    })
}

/// MAPE-complement accuracy in percent of raw-unit speeds.
pub fn accuracy(pred: &[f64], target: &[f64]) -> Result<f64> {
    accuracy_with(pred, target, AccuracyMetric::MapeComplement).map(|s| s.percent)
}

/// Forecasts `horizon` steps ahead by feeding each step's predicted speeds
/// and volumes back in as the newest input column.
pub fn predict_multistep<F: Forecaster + ?Sized>(
    model: &F,
    sample: &Sample,
    horizon: usize,
) -> Result<Vec<PredictionPair>> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut out: Vec<PredictionPair> = Vec::with_capacity(horizon);
    let mut x_u = sample.x_u.clone();
    let mut x_q = sample.x_q.clone();
    for _ in 0..horizon {
        if let Some(prev) = out.last() {
            x_u = x_u.shift_left_append(&prev.pred_u)?;
            x_q = x_q.shift_left_append(&prev.pred_q)?;
        }
        out.push(model.forecast(&x_u, &x_q)?);
    }
    Ok(out)
}

/// Accuracy at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub horizon: usize,
    /// `None` when no sample had a target that far ahead.
    pub accuracy: Option<f64>,
    /// Samples compared against a target.
    pub samples: usize,
    /// Samples without a target `horizon` steps ahead.
    pub skipped: usize,
    /// Elements compared.
    pub counted: usize,
    /// Elements left out because the target was below [`MIN_TARGET_SPEED`].
    pub excluded: usize,
    /// Indexed by 0-based lane.
    pub per_lane: Vec<Option<f64>>,
    /// Indexed by 0-based detector.
    pub per_detector: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: AccuracyMetric,
    pub horizons: Vec<HorizonReport>,
    /// Filled in by the caller when the model was trained in the same run.
    pub loss_curve: Vec<EpochLoss>,
    pub sample_count: usize,
    /// Minutes per step, for labelling.
    pub step_minutes: f64,
}

/// Compares `h`-step rollouts against the sample whose target lies `h`
/// steps after each sample's origin. Speeds are denormalized first.
///
/// Rollouts run in parallel; sums are reduced in sample order so the
/// report does not depend on scheduling.
pub fn evaluate<F: Forecaster + Sync + ?Sized>(
    model: &F,
    samples: &[Sample],
    horizons: &[usize],
    norm: &NormalizationParams,
    metric: AccuracyMetric,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty test set".into()));
    }
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "horizons must be a non-empty list of positive steps, got {horizons:?}"
        )));
    }
    let shape = model.shape();
    let (k, c, interval) = (shape.k, shape.c, shape.interval);
    let max_h = *horizons.iter().max().expect("non-empty");
    let by_origin: HashMap<i64, usize> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| (s.origin_timestamp, i))
        .collect();
    let rollouts: Vec<Vec<PredictionPair>> = samples
        .par_iter()
        .map(|s| predict_multistep(model, s, max_h))
        .collect::<Result<_>>()?;

    let mut reports = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let mut overall = ErrorSums::default();
        let mut lanes = vec![ErrorSums::default(); c];
        let mut detectors = vec![ErrorSums::default(); k];
        let (mut used, mut skipped) = (0, 0);
        for (s, rollout) in samples.iter().zip(&rollouts) {
            let ahead = s.origin_timestamp + (h as i64 - 1) * interval;
            let Some(&j) = by_origin.get(&ahead) else {
                skipped += 1;
                continue;
            };
            used += 1;
            let pred = &rollout[h - 1].pred_u;
            ensure_dim("evaluate", "prediction length", k * c, pred.len())?;
            for (idx, (&p, &t)) in pred.iter().zip(&samples[j].y_u).enumerate() {
                let (p, t) = (norm.raw_speed(p), norm.raw_speed(t));
                overall.add(p, t);
                lanes[idx % c].add(p, t);
                detectors[idx / c].add(p, t);
            }
        }
        let pct = |e: &ErrorSums| e.finish(metric).map(|a| a.percent);
        reports.push(HorizonReport {
            horizon: h,
            accuracy: pct(&overall),
            samples: used,
            skipped,
            counted: overall.counted,
            excluded: overall.excluded,
            per_lane: lanes.iter().map(pct).collect(),
            per_detector: detectors.iter().map(pct).collect(),
        });
    }
    Ok(EvalReport {
        metric,
        horizons: reports,
        loss_curve: Vec::new(),
        sample_count: samples.len(),
        step_minutes: interval as f64 / 60.0,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EvalReport {
    pub fn accuracy_at(&self, horizon: usize) -> Option<f64> {
        self.horizons.iter().find(|h| h.horizon == horizon).and_then(|h| h.accuracy)
    }

    /// Long-format CSV: one overall row per horizon followed by its lane and
    /// detector rows (1-based indices).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "horizon",
            "minutes",
            "scope",
            "index",
            "accuracy_percent",
            "samples",
            "skipped",
        ])?;
        for h in &self.horizons {
            let minutes = (h.horizon as f64 * self.step_minutes).to_string();
            let (horizon, samples, skipped) = (h.horizon.to_string(), h.samples.to_string(), h.skipped.to_string());
            let mut row = |scope: &str, index: usize, acc: Option<f64>| {
                w.write_record([
                    horizon.as_str(),
                    &minutes,
                    scope,
                    &index.to_string(),
                    &cell(acc),
                    &samples,
                    &skipped,
                ])
            };
            row("overall", 0, h.accuracy)?;
            for (l, a) in h.per_lane.iter().enumerate() {
                row("lane", l + 1, *a)?;
            }
            for (i, a) in h.per_detector.iter().enumerate() {
                row("detector", i + 1, *a)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| self.write_csv(w))
    }

    /// One column per horizon, labelled like "1 (5 mins)".
    pub fn table(&self) -> String {
        let mut header = format!("{:<14}", "horizon");
        let mut acc = format!("{:<14}", "accuracy (%)");
        for h in &self.horizons {
            let label = format!("{} ({} mins)", h.horizon, h.horizon as f64 * self.step_minutes);
            let _ = write!(header, "{label:>14}");
            let value = h.accuracy.map(|a| format!("{a:.2}")).unwrap_or_else(|| "n/a".into());
            let _ = write!(acc, "{value:>14}");
        }
        format!("{header}\n{acc}\n")
    }
}

/// `epoch,train_loss,test_loss` with an empty test cell when none was measured.
pub fn write_loss_curve<W: Write>(writer: W, curve: &[EpochLoss]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "train_loss", "test_loss"])?;
    for e in curve {
        w.write_record([e.epoch.to_string(), e.train_loss.to_string(), cell(e.test_loss)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_loss_curve(path: &Path, curve: &[EpochLoss]) -> Result<()> {
    write_atomic(path, |w| write_loss_curve(w, curve))
}
