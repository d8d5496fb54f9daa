use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;

/// One 5-minute observation of one lane at one detector.
///
/// `detector_index` runs 1..=k in milepost order and `lane` runs 1..=c
/// from the shoulder lane to the median lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopRecord {
    pub timestamp: i64,
    pub detector_index: usize,
    pub lane: usize,
    pub speed: f64,
    pub volume: f64,
}

/// Corridor dimensions: `k` detectors, `n` history steps, `c` lanes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorridorShape {
    pub k: usize,
    pub n: usize,
    pub c: usize,
    /// Seconds per time step.
    #[serde(default = "default_interval")]
    pub interval: i64,
}

fn default_interval() -> i64 {
    300
}

impl CorridorShape {
    pub fn new(k: usize, n: usize, c: usize) -> Result<Self> {
        let s = CorridorShape {
            k,
            n,
            c,
            interval: default_interval(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 || self.n < 2 || self.c < 1 {
            return Err(Error::Config(format!(
                "corridor needs k ≥ 2, n ≥ 2, c ≥ 1; got k={} n={} c={}",
                self.k, self.n, self.c
            )));
        }
        if self.interval <= 0 {
            return Err(Error::Config(format!("interval must be positive, got {}", self.interval)));
        }
        Ok(())
    }

    /// Length of one predicted quantity vector, `k·c`.
    pub fn cells(&self) -> usize {
        self.k * self.c
    }
}

impl Default for CorridorShape {
    fn default() -> Self {
        CorridorShape {
            k: 10,
            n: 8,
            c: 4,
            interval: default_interval(),
        }
    }
}

impl LoopRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.detector_index == 0 {
            return Err("detector_index is 1-based".into());
        }
        if self.lane == 0 {
            return Err("lane is 1-based".into());
        }
        if !self.speed.is_finite() || self.speed < 0.0 {
            return Err(format!("speed must be finite and non-negative, got {}", self.speed));
        }
        if !self.volume.is_finite() || self.volume < 0.0 {
            return Err(format!("volume must be finite and non-negative, got {}", self.volume));
        }
        Ok(())
    }
}

const HEADER: [&str; 5] = ["timestamp", "detector_index", "lane", "speed", "volume"];

/// Parses the `timestamp,detector_index,lane,speed,volume` CSV format.
pub fn read_records_from<R: Read>(reader: R) -> Result<Vec<LoopRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().map(str::trim).ne(HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<LoopRecord>() {
        let rec = row.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        rec.validate().map_err(|message| Error::Parse {
            line: out.len() as u64 + 2,
            message,
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<LoopRecord>> {
    let f = File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_records_from(f)
}

pub fn write_records_to<W: Write>(writer: W, records: &[LoopRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records(path: &Path, records: &[LoopRecord]) -> Result<()> {
    write_atomic(path, |w| write_records_to(w, records))
}
