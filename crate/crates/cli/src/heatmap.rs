//! Detector × time speed grids for a range of days, as CSV and PGM, plus
//! single-detector truth/prediction curves.

use std::io::Write;
use std::path::{Path, PathBuf};

use lanecast_core::data::{NormalizationParams, RecordGrid};
use lanecast_core::io::write_atomic;
use lanecast_core::model::Forecaster;
use lanecast_core::{Error, Result};

const SECONDS_PER_DAY: i64 = 86_400;

/// Per-lane grids indexed `[lane][detector][t]`, with `None` for missing
/// records or steps without a complete input window.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmaps {
    pub timestamps: Vec<i64>,
    pub truth: Vec<Vec<Vec<Option<f64>>>>,
    pub prediction: Vec<Vec<Vec<Option<f64>>>>,
    /// Upper end of the grayscale range.
    pub speed_max: f64,
}

/// Time indices covering `days` whole days starting `start_day` days
/// after the first record.
pub fn day_range(grid: &RecordGrid, start_day: usize, days: usize) -> Result<std::ops::Range<usize>> {
    let interval = grid.shape().interval;
    if days == 0 {
        return Err(Error::InvalidArgument("day range must cover at least one day".into()));
    }
    if SECONDS_PER_DAY % interval != 0 {
        return Err(Error::InvalidArgument(format!(
            "a {interval} s interval does not divide a day"
        )));
    }
    let per_day = (SECONDS_PER_DAY / interval) as usize;
    let start = start_day * per_day;
    let end = (start_day + days) * per_day;
    if end > grid.steps() {
        return Err(Error::InvalidArgument(format!(
            "days {start_day}..{} lie outside the data, which spans {:.2} days",
            start_day + days,
            grid.steps() as f64 / per_day as f64
        )));
    }
    Ok(start..end)
}

/// Ground truth from the records and one-step predictions from windows
/// whose target falls at each step.
pub fn build_heatmaps<F: Forecaster + ?Sized>(
    model: &F,
    grid: &RecordGrid,
    norm: &NormalizationParams,
    start_day: usize,
    days: usize,
) -> Result<Heatmaps> {
    let shape = grid.shape();
    if model.shape() != shape {
        return Err(Error::InvalidArgument(format!(
            "model shape {:?} does not match the data shape {shape:?}",
            model.shape()
        )));
    }
    let (k, n, c) = (shape.k, shape.n, shape.c);
    let range = day_range(grid, start_day, days)?;
    let width = range.len();
    let mut truth = vec![vec![vec![None; width]; k]; c];
    let mut prediction = truth.clone();
    for (col, t) in range.clone().enumerate() {
        for (l, lane) in truth.iter_mut().enumerate() {
            for (i, row) in lane.iter_mut().enumerate() {
                row[col] = grid.raw(t, i, l).map(|(speed, _)| speed);
            }
        }
        if t < n || !(t - n..=t).all(|s| grid.is_complete(s)) {
            continue;
        }
        let sample = grid.sample_at(t - 1, norm)?;
        let pred = model.forecast(&sample.x_u, &sample.x_q)?;
        for (l, lane) in prediction.iter_mut().enumerate() {
            for (i, row) in lane.iter_mut().enumerate() {
                row[col] = Some(norm.raw_speed(pred.pred_u[i * c + l]));
            }
        }
    }
    Ok(Heatmaps {
        timestamps: range.map(|t| grid.timestamp(t)).collect(),
        truth,
        prediction,
        speed_max: norm.speed_max,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `detector,<timestamp>...` with one row per detector.
pub fn write_grid_csv<W: Write>(writer: W, timestamps: &[i64], grid: &[Vec<Option<f64>>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["detector".to_string()];
    header.extend(timestamps.iter().map(|t| t.to_string()));
    w.write_record(&header)?;
    for (i, row) in grid.iter().enumerate() {
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(row.iter().map(|&v| cell(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Binary graymap: detectors as rows, time as columns, black for 0 mph
/// (and for missing values) and white for `speed_max`.
pub fn write_pgm<W: Write + ?Sized>(writer: &mut W, grid: &[Vec<Option<f64>>], speed_max: f64) -> Result<()> {
    let height = grid.len();
    let width = grid.first().map_or(0, Vec::len);
    write!(writer, "P5\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = grid
        .iter()
        .flatten()
        .map(|v| v.map_or(0, |s| (255.0 * (s / speed_max).clamp(0.0, 1.0)).round() as u8))
        .collect();
    writer.write_all(&bytes)?;
    Ok(())
}

/// `timestamp,truth,prediction` for one detector and lane.
pub fn write_curve_csv<W: Write>(
    writer: W,
    timestamps: &[i64],
    truth: &[Option<f64>],
    prediction: &[Option<f64>],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "truth", "prediction"])?;
    for ((t, &a), &b) in timestamps.iter().zip(truth).zip(prediction) {
        w.write_record([t.to_string(), cell(a), cell(b)])?;
    }
    w.flush()?;
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    prefix.with_file_name(name)
}

impl Heatmaps {
    /// Writes `{prefix}_lane{l}_{truth,pred}.{csv,pgm}` and
    /// `{prefix}_det{i}_lane{l}.csv`, returning every path written.
    pub fn save(&self, prefix: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for (l, (truth, pred)) in self.truth.iter().zip(&self.prediction).enumerate() {
            for (tag, grid) in [("truth", truth), ("pred", pred)] {
                let csv_path = with_suffix(prefix, &format!("_lane{}_{tag}.csv", l + 1));
                write_atomic(&csv_path, |w| write_grid_csv(w, &self.timestamps, grid))?;
                let pgm_path = with_suffix(prefix, &format!("_lane{}_{tag}.pgm", l + 1));
                write_atomic(&pgm_path, |w| write_pgm(w, grid, self.speed_max))?;
                written.extend([csv_path, pgm_path]);
            }
            for (i, (a, b)) in truth.iter().zip(pred).enumerate() {
                let path = with_suffix(prefix, &format!("_det{}_lane{}.csv", i + 1, l + 1));
                write_atomic(&path, |w| write_curve_csv(w, &self.timestamps, a, b))?;
                written.push(path);
            }
        }
        Ok(written)
    }
}
