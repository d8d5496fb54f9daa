//! Independent finite-difference oracle and random fixtures for unit tests.

use rand::Rng;

use crate::tensor::{FilterBank, LaneTensor};

pub fn random_vec<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn random_tensor<R: Rng>(rng: &mut R, rows: usize, cols: usize, channels: usize) -> LaneTensor {
    LaneTensor::from_vec(rows, cols, channels, random_vec(rng, rows * cols * channels)).unwrap()
}

pub fn random_bank<R: Rng>(
    rng: &mut R,
    num_filters: usize,
    filter_rows: usize,
    filter_cols: usize,
    in_channels: usize,
) -> FilterBank {
    let n = num_filters * filter_rows * filter_cols * in_channels;
    FilterBank::new(
        num_filters,
        filter_rows,
        filter_cols,
        in_channels,
        random_vec(rng, n),
        random_vec(rng, num_filters),
    )
    .unwrap()
}

/// `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every coordinate `i`.
pub fn central_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-12))
        .fold(0.0, f64::max)
}
