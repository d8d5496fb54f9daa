use log::info;
use serde::{Deserialize, Serialize};

use super::normalize::{fit_normalization, NormalizationParams};
use super::records::{CorridorShape, LoopRecord};
use crate::error::{Error, Result};
use crate::tensor::LaneTensor;

/// One training example.
///
/// `x_u` and `x_q` are `k × n × c`: row = detector (milepost order),
/// column = time step (oldest first), channel = lane. `y_u` and `y_q` hold
/// the next step laid out detector-major with lane innermost, so entry
/// `i·c + l` is detector `i`, lane `l`. `origin_timestamp` is the time of
/// the newest input column; the targets are one interval later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x_u: LaneTensor,
    pub x_q: LaneTensor,
    pub y_u: Vec<f64>,
    pub y_q: Vec<f64>,
    pub origin_timestamp: i64,
}

impl Sample {
    pub fn target_timestamp(&self, interval: i64) -> i64 {
        self.origin_timestamp + interval
    }
}

/// Window bookkeeping for one pass of [`build_samples`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowStats {
    /// Window positions in the covered time span (`T − n` for `T` steps).
    pub positions: usize,
    pub kept: usize,
    /// Positions skipped because some cell in the window was missing.
    pub dropped: usize,
}

/// Records arranged on a dense (time, detector, lane) grid.
#[derive(Debug, Clone)]
pub struct RecordGrid {
    shape: CorridorShape,
    start: i64,
    steps: usize,
    speed: Vec<f64>,
    volume: Vec<f64>,
    present: Vec<bool>,
    complete: Vec<bool>,
}

impl RecordGrid {
    pub fn from_records(records: &[LoopRecord], shape: CorridorShape) -> Result<Self> {
        shape.validate()?;
        let (k, c, dt) = (shape.k, shape.c, shape.interval);
        if records.is_empty() {
            return Err(Error::Data("no records".into()));
        }
        for (idx, r) in records.iter().enumerate() {
            if r.timestamp.rem_euclid(dt) != 0 {
                return Err(Error::Data(format!(
                    "record {}: timestamp {} is not aligned to the {dt} s interval",
                    idx + 1,
                    r.timestamp
                )));
            }
            if r.detector_index == 0 || r.detector_index > k || r.lane == 0 || r.lane > c {
                return Err(Error::Data(format!(
                    "record {}: detector {} lane {} outside corridor k={k} c={c}",
                    idx + 1,
                    r.detector_index,
                    r.lane
                )));
            }
        }
        let start = records.iter().map(|r| r.timestamp).min().unwrap();
        let end = records.iter().map(|r| r.timestamp).max().unwrap();
        let steps = ((end - start) / dt) as usize + 1;
        let cells = steps * k * c;
        let mut grid = RecordGrid {
            shape,
            start,
            steps,
            speed: vec![0.0; cells],
            volume: vec![0.0; cells],
            present: vec![false; cells],
            complete: Vec::new(),
        };
        for r in records {
            let t = ((r.timestamp - start) / dt) as usize;
            let idx = grid.cell(t, r.detector_index - 1, r.lane - 1);
            if grid.present[idx] {
                return Err(Error::Data(format!(
                    "duplicate record at timestamp {} detector {} lane {}",
                    r.timestamp, r.detector_index, r.lane
                )));
            }
            grid.present[idx] = true;
            grid.speed[idx] = r.speed;
            grid.volume[idx] = r.volume;
        }
        grid.complete = (0..steps)
            .map(|t| grid.present[t * k * c..(t + 1) * k * c].iter().all(|&p| p))
            .collect();
        Ok(grid)
    }

    #[inline]
    fn cell(&self, t: usize, detector: usize, lane: usize) -> usize {
        (t * self.shape.k + detector) * self.shape.c + lane
    }

    pub fn shape(&self) -> CorridorShape {
        self.shape
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn timestamp(&self, t: usize) -> i64 {
        self.start + t as i64 * self.shape.interval
    }

    pub fn time_index(&self, ts: i64) -> Option<usize> {
        let off = ts - self.start;
        if off < 0 || off % self.shape.interval != 0 {
            return None;
        }
        let t = (off / self.shape.interval) as usize;
        (t < self.steps).then_some(t)
    }

    pub fn is_complete(&self, t: usize) -> bool {
        self.complete[t]
    }

    /// Raw `(speed, volume)` at zero-based detector and lane, if recorded.
    pub fn raw(&self, t: usize, detector: usize, lane: usize) -> Option<(f64, f64)> {
        let idx = self.cell(t, detector, lane);
        self.present[idx].then(|| (self.speed[idx], self.volume[idx]))
    }

    /// Time indices of the newest input column of every fully observed window.
    pub fn window_origins(&self) -> (Vec<usize>, WindowStats) {
        let n = self.shape.n;
        if self.steps <= n {
            return (Vec::new(), WindowStats::default());
        }
        // A window at origin t needs steps t-n+1 ..= t+1.
        let mut origins = Vec::new();
        let mut run = 0usize;
        let mut stats = WindowStats {
            positions: self.steps - n,
            ..Default::default()
        };
        for t in 0..self.steps {
            run = if self.complete[t] { run + 1 } else { 0 };
            if t >= n && run > n {
                origins.push(t - 1);
            }
        }
        stats.kept = origins.len();
        stats.dropped = stats.positions - stats.kept;
        (origins, stats)
    }

    /// Builds the sample whose newest input column is time index `t`.
    pub fn sample_at(&self, t: usize, norm: &NormalizationParams) -> Result<Sample> {
        let CorridorShape { k, n, c, .. } = self.shape;
        if t + 1 < n || t + 1 >= self.steps {
            return Err(Error::Data(format!("window origin {t} out of range")));
        }
        let first = t + 1 - n;
        if (first..=t + 1).any(|s| !self.complete[s]) {
            return Err(Error::Data(format!(
                "window ending at {} has missing cells",
                self.timestamp(t)
            )));
        }
        let x_u = LaneTensor::from_fn(k, n, c, |i, col, l| norm.speed(self.speed[self.cell(first + col, i, l)]));
        let x_q = LaneTensor::from_fn(k, n, c, |i, col, l| norm.volume(self.volume[self.cell(first + col, i, l)]));
        let base = self.cell(t + 1, 0, 0);
        let y_u = self.speed[base..base + k * c].iter().map(|&v| norm.speed(v)).collect();
        let y_q = self.volume[base..base + k * c].iter().map(|&v| norm.volume(v)).collect();
        Ok(Sample {
            x_u,
            x_q,
            y_u,
            y_q,
            origin_timestamp: self.timestamp(t),
        })
    }
}

/// Slides an `n`-step window over the records, one sample per fully
/// observed position, in chronological order.
pub fn build_samples(
    records: &[LoopRecord],
    shape: CorridorShape,
    norm: &NormalizationParams,
) -> Result<(Vec<Sample>, WindowStats)> {
    let grid = RecordGrid::from_records(records, shape)?;
    let (origins, stats) = grid.window_origins();
    if stats.dropped > 0 {
        info!(
            "dropped {} of {} windows with missing cells",
            stats.dropped, stats.positions
        );
    }
    let samples = origins
        .iter()
        .map(|&t| grid.sample_at(t, norm))
        .collect::<Result<Vec<_>>>()?;
    Ok((samples, stats))
}

/// Number of training samples for a chronological split.
pub fn train_count(total: usize, train_fraction: f64) -> Result<usize> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n_train = (total as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train >= total {
        return Err(Error::Data(format!(
            "{total} samples at fraction {train_fraction} leaves an empty side"
        )));
    }
    Ok(n_train)
}

/// Earlier windows go to training and later ones to testing. No shuffling
/// across the boundary.
pub fn split_dataset(samples: Vec<Sample>, train_fraction: f64) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let n_train = train_count(samples.len(), train_fraction)?;
    let mut train = samples;
    let test = train.split_off(n_train);
    Ok((train, test))
}

/// A normalized, chronologically split corpus.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub shape: CorridorShape,
    pub norm: NormalizationParams,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub stats: WindowStats,
}

/// Windows the records, fits normalization on the training period only,
/// then builds and splits the samples.
pub fn prepare_dataset(
    records: &[LoopRecord],
    shape: CorridorShape,
    train_fraction: f64,
) -> Result<Dataset> {
    let grid = RecordGrid::from_records(records, shape)?;
    let (origins, stats) = grid.window_origins();
    if stats.dropped > 0 {
        info!("dropped {} of {} windows with missing cells", stats.dropped, stats.positions);
    }
    let n_train = train_count(origins.len(), train_fraction)?;
    // Training windows read records up to and including their target step.
    let train_end = grid.timestamp(origins[n_train - 1] + 1) + 1;
    let norm = fit_normalization(records, grid.start()..train_end)?;
    let mut train = origins
        .iter()
        .map(|&t| grid.sample_at(t, &norm))
        .collect::<Result<Vec<_>>>()?;
    let test = train.split_off(n_train);
    Ok(Dataset {
        shape,
        norm,
        train,
        test,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(k: usize, n: usize, c: usize) -> CorridorShape {
        CorridorShape::new(k, n, c).unwrap()
    }

    fn grid_records(k: usize, c: usize, steps: usize, f: impl Fn(usize, usize, usize) -> (f64, f64)) -> Vec<LoopRecord> {
        let mut out = Vec::new();
        for t in 0..steps {
            for i in 0..k {
                for l in 0..c {
                    let (speed, volume) = f(t, i, l);
                    out.push(LoopRecord {
                        timestamp: 300 * t as i64,
                        detector_index: i + 1,
                        lane: l + 1,
                        speed,
                        volume,
                    });
                }
            }
        }
        out
    }

    fn norm() -> NormalizationParams {
        NormalizationParams::new(0.0, 100.0, 0.0, 50.0).unwrap()
    }

    #[test]
    fn hand_built_layout() {
        // speed = 10·(t+1) + detector, volume = t + 1
        let recs = grid_records(2, 1, 3, |t, i, _| (10.0 * (t + 1) as f64 + i as f64, (t + 1) as f64));
        let (samples, stats) = build_samples(&recs, shape(2, 2, 1), &norm()).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(stats, WindowStats { positions: 1, kept: 1, dropped: 0 });
        let s = &samples[0];
        // rows are detectors, columns are t=0,1
        assert_eq!(s.x_u.as_slice(), &[0.10, 0.20, 0.11, 0.21]);
        assert_eq!(s.x_q.as_slice(), &[0.02, 0.04, 0.02, 0.04]);
        assert_eq!(s.y_u, vec![0.30, 0.31]);
        assert_eq!(s.y_q, vec![0.06, 0.06]);
        assert_eq!(s.origin_timestamp, 300);
    }

    #[test]
    fn constant_field() {
        let recs = grid_records(3, 2, 6, |_, _, _| (42.0, 7.0));
        let (samples, _) = build_samples(&recs, shape(3, 3, 2), &norm()).unwrap();
        assert_eq!(samples.len(), 3);
        for s in &samples {
            assert!(s.x_u.as_slice().iter().all(|&v| v == norm().speed(42.0)));
        }
    }

    #[test]
    fn missing_record_drops_overlapping_windows() {
        // 4 timestamps, n = 2: two positions (origins 1 and 2). Origin 1
        // reads steps 0..=2 and origin 2 reads steps 1..=3.
        let expected = [1usize, 0, 0, 1];
        for (missing_t, &want) in expected.iter().enumerate() {
            let mut recs = grid_records(2, 1, 4, |t, i, _| (30.0 + t as f64 + i as f64, 5.0 + t as f64));
            recs.retain(|r| !(r.timestamp == 300 * missing_t as i64 && r.detector_index == 2));
            let (samples, stats) = build_samples(&recs, shape(2, 2, 1), &norm()).unwrap();
            assert_eq!(samples.len(), want, "missing at t={missing_t}");
            assert_eq!(stats.positions, 2);
            assert_eq!(stats.dropped, 2 - want);
        }
    }

    #[test]
    fn window_count_is_steps_minus_n() {
        for steps in 3..12 {
            let recs = grid_records(2, 2, steps, |t, i, l| (t as f64 + i as f64 + l as f64, 1.0 + t as f64));
            let (samples, stats) = build_samples(&recs, shape(2, 3, 2), &norm()).unwrap();
            assert_eq!(samples.len(), steps.saturating_sub(3));
            assert_eq!(stats.positions, steps.saturating_sub(3));
        }
    }

    #[test]
    fn out_of_range_and_duplicate_records() {
        let mut recs = grid_records(2, 1, 3, |_, _, _| (50.0, 5.0));
        recs[0].lane = 2;
        assert!(matches!(build_samples(&recs, shape(2, 2, 1), &norm()), Err(Error::Data(_))));
        let mut recs = grid_records(2, 1, 3, |_, _, _| (50.0, 5.0));
        recs[1] = recs[0];
        assert!(matches!(build_samples(&recs, shape(2, 2, 1), &norm()), Err(Error::Data(_))));
        let mut recs = grid_records(2, 1, 3, |_, _, _| (50.0, 5.0));
        recs[0].timestamp = 17;
        assert!(matches!(build_samples(&recs, shape(2, 2, 1), &norm()), Err(Error::Data(_))));
    }

    #[test]
    fn split_sizes() {
        assert_eq!(train_count(105_000, 80_000.0 / 105_000.0).unwrap(), 80_000);
        let recs = grid_records(2, 1, 12, |t, i, _| (20.0 + t as f64 + i as f64, 1.0 + t as f64));
        let (samples, _) = build_samples(&recs, shape(2, 2, 1), &norm()).unwrap();
        assert_eq!(samples.len(), 10);
        let (train, test) = split_dataset(samples.clone(), 0.8).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let last_train = train.iter().map(|s| s.origin_timestamp).max().unwrap();
        assert!(test.iter().all(|s| s.origin_timestamp > last_train));
        assert!(split_dataset(samples.clone(), 0.999).is_err());
        assert!(split_dataset(samples, 0.0).is_err());
    }

    #[test]
    fn prepared_dataset_fits_on_training_period() {
        // Speeds rise over time, so the test period exceeds the training max.
        let recs = grid_records(2, 1, 20, |t, i, _| (10.0 + 2.0 * t as f64 + i as f64, 3.0 + (t % 4) as f64));
        let ds = prepare_dataset(&recs, shape(2, 2, 1), 0.5).unwrap();
        assert_eq!(ds.train.len() + ds.test.len(), 18);
        assert_eq!(ds.train.len(), 9);
        // origins start at step 1, so the last training origin is step 9 and
        // its target step 10 has speeds 30 and 31
        assert_eq!(ds.norm.speed_max, 31.0);
        assert!(ds.test.last().unwrap().y_u.iter().all(|&v| v == 1.0));
    }
}
