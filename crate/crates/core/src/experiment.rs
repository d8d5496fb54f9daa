//! One train-then-evaluate run, and sweeps of such runs over λ or the
//! learning rate.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{evaluate, AccuracyMetric, EvalReport};
use crate::io::write_atomic;
use crate::model::{ArchitectureConfig, LaneCnn};
use crate::train::{train, EpochLoss, TrainConfig};

/// A trained network with its loss curve and test-set report.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub network: LaneCnn,
    pub report: EvalReport,
}

/// Builds a network from `arch`, trains it on `dataset.train`, and
/// evaluates it on `dataset.test` at `horizons`. The report carries the
/// loss curve.
pub fn train_and_evaluate(
    arch: &ArchitectureConfig,
    train_cfg: &TrainConfig,
    dataset: &Dataset,
    horizons: &[usize],
    metric: AccuracyMetric,
) -> Result<RunOutcome> {
    if arch.shape != dataset.shape {
        return Err(Error::Config(format!(
            "architecture shape {:?} does not match the data shape {:?}",
            arch.shape, dataset.shape
        )));
    }
    let mut network = LaneCnn::new(arch.clone())?;
    let curve = train(&mut network, &dataset.train, &dataset.test, train_cfg)?;
    let mut report = evaluate(&network, &dataset.test, horizons, &dataset.norm, metric)?;
    report.loss_curve = curve;
    Ok(RunOutcome { network, report })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Lambda,
    #[serde(rename = "lr")]
    LearningRate,
}

impl SweepAxis {
    pub fn apply(self, base: &TrainConfig, value: f64) -> TrainConfig {
        match self {
            SweepAxis::Lambda => TrainConfig { lambda: value, ..*base },
            SweepAxis::LearningRate => TrainConfig {
                learning_rate: value,
                ..*base
            },
        }
    }

    /// λ from 0 to 0.9 in steps of 0.1, or five learning rates spaced
    /// evenly in log scale from 1e-2 down to 1e-5.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepAxis::Lambda => (0..10).map(|i| i as f64 / 10.0).collect(),
            SweepAxis::LearningRate => (0..5).map(|i| 10f64.powf(-2.0 - 0.75 * i as f64)).collect(),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Lambda => "lambda",
            SweepAxis::LearningRate => "lr",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(SweepAxis::Lambda),
            "lr" | "learning_rate" => Ok(SweepAxis::LearningRate),
            other => Err(Error::InvalidArgument(format!(
                "unknown sweep axis {other:?}; expected lambda or lr"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Diverged(String),
}

/// One sweep point. Loss and accuracy fields are `None` for a diverged run.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub value: f64,
    pub accuracy_h1: Option<f64>,
    pub final_train_loss: Option<f64>,
    pub final_test_loss: Option<f64>,
    pub status: RunStatus,
    pub curve: Vec<EpochLoss>,
}

/// Trains one network per value, in parallel, each from the same
/// initialization and training seed. Results come back in `values` order.
///
/// A run that fails with [`Error::Numeric`] is recorded as diverged and the
/// sweep carries on; any other error aborts the sweep.
pub fn sweep(
    axis: SweepAxis,
    values: &[f64],
    arch: &ArchitectureConfig,
    base: &TrainConfig,
    dataset: &Dataset,
    metric: AccuracyMetric,
) -> Result<Vec<SweepRun>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one value".into()));
    }
    values
        .par_iter()
        .map(|&value| {
            let cfg = axis.apply(base, value);
            match train_and_evaluate(arch, &cfg, dataset, &[1], metric) {
                Ok(run) => {
                    let last = run.report.loss_curve.last();
                    Ok(SweepRun {
                        value,
                        accuracy_h1: run.report.accuracy_at(1),
                        final_train_loss: last.map(|e| e.train_loss),
                        final_test_loss: last.and_then(|e| e.test_loss),
                        status: RunStatus::Ok,
                        curve: run.report.loss_curve,
                    })
                }
                Err(Error::Numeric(msg)) => {
                    warn!("{axis} = {value}: {msg}");
                    Ok(SweepRun {
                        value,
                        accuracy_h1: None,
                        final_train_loss: None,
                        final_test_loss: None,
                        status: RunStatus::Diverged(msg),
                        curve: Vec::new(),
                    })
                }
                Err(e) => Err(e),
            }
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `value,accuracy_h1,final_train_loss,final_test_loss,status`.
pub fn write_sweep_csv<W: Write>(writer: W, runs: &[SweepRun]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["value", "accuracy_h1", "final_train_loss", "final_test_loss", "status"])?;
    for r in runs {
        let status = match &r.status {
            RunStatus::Ok => "ok",
            RunStatus::Diverged(_) => "diverged",
        };
        w.write_record([
            r.value.to_string(),
            cell(r.accuracy_h1),
            cell(r.final_train_loss),
            cell(r.final_test_loss),
            status.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plot-ready long format: `value,epoch,train_loss,test_loss`.
pub fn write_sweep_curves<W: Write>(writer: W, runs: &[SweepRun]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["value", "epoch", "train_loss", "test_loss"])?;
    for r in runs {
        for e in &r.curve {
            w.write_record([
                r.value.to_string(),
                e.epoch.to_string(),
                e.train_loss.to_string(),
                cell(e.test_loss),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_sweep(table: &Path, curves: &Path, runs: &[SweepRun]) -> Result<()> {
    write_atomic(table, |w| write_sweep_csv(w, runs))?;
    write_atomic(curves, |w| write_sweep_curves(w, runs))
}
