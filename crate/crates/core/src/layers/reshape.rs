use crate::error::{Error, Result};
use crate::tensor::LaneTensor;

/// Flattens in the tensor's storage order: row-major, channel innermost.
pub fn flatten(x: &LaneTensor) -> Vec<f64> {
    x.as_slice().to_vec()
}

/// Inverse of [`flatten`]; also the flatten layer's backward pass.
pub fn unflatten(v: Vec<f64>, rows: usize, cols: usize, channels: usize) -> Result<LaneTensor> {
    LaneTensor::from_vec(rows, cols, channels, v)
}

/// `a` followed by `b`. The lengths are independent.
pub fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

/// Splits an upstream gradient at `split` (the length of the first operand).
pub fn concat_backward(grad: &[f64], split: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if split > grad.len() {
        return Err(Error::InvalidArgument(format!(
            "concat split {split} exceeds gradient length {}",
            grad.len()
        )));
    }
    let (a, b) = grad.split_at(split);
    Ok((a.to_vec(), b.to_vec()))
}
