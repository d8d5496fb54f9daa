//! Value-semantic arrays shared by every layer.
//!
//! All storage is row-major with the channel index innermost, so the
//! `c` lane values of one (detector, time) cell sit next to each other.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

/// A `rows × cols × channels` array of reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneTensor {
    rows: usize,
    cols: usize,
    channels: usize,
    data: Vec<f64>,
}

impl LaneTensor {
    pub fn zeros(rows: usize, cols: usize, channels: usize) -> Self {
        LaneTensor {
            rows,
            cols,
            channels,
            data: vec![0.0; rows * cols * channels],
        }
    }

    pub fn filled(rows: usize, cols: usize, channels: usize, value: f64) -> Self {
        LaneTensor {
            rows,
            cols,
            channels,
            data: vec![value; rows * cols * channels],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        ensure_dim("LaneTensor::from_vec", "data length", rows * cols * channels, data.len())?;
        Ok(LaneTensor {
            rows,
            cols,
            channels,
            data,
        })
    }

    /// Builds a tensor by evaluating `f(row, col, channel)` for every cell.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols * channels);
        for r in 0..rows {
            for c in 0..cols {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        LaneTensor {
            rows,
            cols,
            channels,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols && channel < self.channels);
        (row * self.cols + col) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.index(row, col, channel)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        let idx = self.index(row, col, channel);
        self.data[idx] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> LaneTensor {
        LaneTensor {
            rows: self.rows,
            cols: self.cols,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies column `col` (all rows, all channels) into a `rows × channels` vector.
    pub fn column(&self, col: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows * self.channels);
        for r in 0..self.rows {
            let start = self.index(r, col, 0);
            out.extend_from_slice(&self.data[start..start + self.channels]);
        }
        out
    }

    /// Drops the first column and appends `column` (laid out `rows × channels`) as the last.
    pub fn shift_left_append(&self, column: &[f64]) -> Result<LaneTensor> {
        ensure_dim(
            "LaneTensor::shift_left_append",
            "column length",
            self.rows * self.channels,
            column.len(),
        )?;
        let mut out = LaneTensor::zeros(self.rows, self.cols, self.channels);
        let ch = self.channels;
        for r in 0..self.rows {
            let src = self.index(r, 0, 0);
            let dst = out.index(r, 0, 0);
            let row_len = self.cols * ch;
            out.data[dst..dst + row_len - ch].copy_from_slice(&self.data[src + ch..src + row_len]);
            out.data[dst + row_len - ch..dst + row_len]
                .copy_from_slice(&column[r * ch..(r + 1) * ch]);
        }
        Ok(out)
    }
}

/// A bank of `num_filters` convolution kernels of shape `filter_rows × filter_cols × in_channels`.
///
/// Weights are filter-major, then row, column, channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub num_filters: usize,
    pub filter_rows: usize,
    pub filter_cols: usize,
    pub in_channels: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl FilterBank {
    pub fn zeros(
        num_filters: usize,
        filter_rows: usize,
        filter_cols: usize,
        in_channels: usize,
    ) -> Self {
        FilterBank {
            num_filters,
            filter_rows,
            filter_cols,
            in_channels,
            weights: vec![0.0; num_filters * filter_rows * filter_cols * in_channels],
            biases: vec![0.0; num_filters],
        }
    }

    pub fn new(
        num_filters: usize,
        filter_rows: usize,
        filter_cols: usize,
        in_channels: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
    ) -> Result<Self> {
        let bank = FilterBank {
            num_filters,
            filter_rows,
            filter_cols,
            in_channels,
            weights,
            biases,
        };
        bank.validate()?;
        Ok(bank)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_dim(
            "FilterBank",
            "weights length",
            self.num_filters * self.kernel_len(),
            self.weights.len(),
        )?;
        ensure_dim("FilterBank", "biases length", self.num_filters, self.biases.len())
    }

    /// Number of weights in a single filter, which is also its fan-in.
    pub fn kernel_len(&self) -> usize {
        self.filter_rows * self.filter_cols * self.in_channels
    }

    #[inline]
    pub fn weight_index(&self, filter: usize, row: usize, col: usize, channel: usize) -> usize {
        ((filter * self.filter_rows + row) * self.filter_cols + col) * self.in_channels + channel
    }

    pub fn zeros_like(&self) -> Self {
        FilterBank::zeros(self.num_filters, self.filter_rows, self.filter_cols, self.in_channels)
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Weights (`out_dim × in_dim`, row-major) and biases of a fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        DenseParams {
            out_dim,
            in_dim,
            weights: vec![0.0; out_dim * in_dim],
            biases: vec![0.0; out_dim],
        }
    }

    pub fn new(out_dim: usize, in_dim: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        let p = DenseParams {
            out_dim,
            in_dim,
            weights,
            biases,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn identity(dim: usize) -> Self {
        let mut p = DenseParams::zeros(dim, dim);
        for i in 0..dim {
            p.weights[i * dim + i] = 1.0;
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        ensure_dim(
            "DenseParams",
            "weights length",
            self.out_dim * self.in_dim,
            self.weights.len(),
        )?;
        ensure_dim("DenseParams", "biases length", self.out_dim, self.biases.len())
    }

    pub fn zeros_like(&self) -> Self {
        DenseParams::zeros(self.out_dim, self.in_dim)
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Uniform access to every trainable array of a parameter set, in a fixed order.
///
/// The optimizer, the gradient checker and gradient accumulation all walk
/// parameters through this view, so a gradient set must be the same type
/// (and the same shapes) as the parameters it belongs to.
pub trait ParamArrays {
    fn arrays(&self) -> Vec<(String, &[f64])>;
    fn arrays_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn param_count(&self) -> usize {
        self.arrays().iter().map(|(_, a)| a.len()).sum()
    }

    /// `self += other`, elementwise over every array.
    fn accumulate(&mut self, other: &Self) -> Result<()> {
        let src = other.arrays();
        let mut dst = self.arrays_mut();
        ensure_dim("ParamArrays::accumulate", "array count", dst.len(), src.len())?;
        for ((name, d), (_, s)) in dst.iter_mut().zip(src.iter()) {
            if d.len() != s.len() {
                return Err(Error::InvalidArgument(format!(
                    "array {name}: length {} vs {}",
                    d.len(),
                    s.len()
                )));
            }
            for (a, b) in d.iter_mut().zip(s.iter()) {
                *a += *b;
            }
        }
        Ok(())
    }

    fn scale(&mut self, factor: f64) {
        for (_, a) in self.arrays_mut() {
            for v in a.iter_mut() {
                *v *= factor;
            }
        }
    }

    fn all_finite(&self) -> bool {
        self.arrays()
            .iter()
            .all(|(_, a)| a.iter().all(|v| v.is_finite()))
    }
}

impl ParamArrays for FilterBank {
    fn arrays(&self) -> Vec<(String, &[f64])> {
        vec![
            ("weights".to_string(), &self.weights[..]),
            ("biases".to_string(), &self.biases[..]),
        ]
    }

    fn arrays_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![
            ("weights".to_string(), &mut self.weights[..]),
            ("biases".to_string(), &mut self.biases[..]),
        ]
    }
}

impl ParamArrays for DenseParams {
    fn arrays(&self) -> Vec<(String, &[f64])> {
        vec![
            ("weights".to_string(), &self.weights[..]),
            ("biases".to_string(), &self.biases[..]),
        ]
    }

    fn arrays_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![
            ("weights".to_string(), &mut self.weights[..]),
            ("biases".to_string(), &mut self.biases[..]),
        ]
    }
}
