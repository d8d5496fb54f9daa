//! Deterministic fixtures shared by the benchmarks.

use lanecast_core::model::ArchitectureConfig;
use lanecast_core::tensor::{FilterBank, LaneTensor};

/// A tensor filled with a fixed, non-trivial pattern in (-1, 1).
pub fn patterned_tensor(rows: usize, cols: usize, channels: usize) -> LaneTensor {
    LaneTensor::from_fn(rows, cols, channels, |r, c, ch| {
        (((r * 31 + c * 17 + ch * 7) % 23) as f64 / 11.5) - 1.0
    })
}

pub fn patterned_bank(filters: usize, rows: usize, cols: usize, channels: usize) -> FilterBank {
    let mut bank = FilterBank::zeros(filters, rows, cols, channels);
    for (i, w) in bank.weights.iter_mut().enumerate() {
        *w = ((i * 13 % 19) as f64 / 9.5) - 1.0;
    }
    bank
}

/// The default 10×8×4 architecture with a fixed seed.
pub fn default_architecture() -> ArchitectureConfig {
    ArchitectureConfig {
        seed: 7,
        ..Default::default()
    }
}
