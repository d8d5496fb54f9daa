use crate::error::{ensure_dim, Result};
use crate::tensor::LaneTensor;

/// Elementwise `max(0, x)`.
pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
}

pub fn relu_tensor(x: &LaneTensor) -> LaneTensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Passes `grad_out` where `x > 0`; the subgradient at exactly zero is zero.
///
/// `x` may be either the pre-activation or the Relu output, the gate is the same.
pub fn relu_backward(x: &[f64], grad_out: &[f64]) -> Result<Vec<f64>> {
    ensure_dim("relu_backward", "gradient length", x.len(), grad_out.len())?;
    Ok(x
        .iter()
        .zip(grad_out)
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_negatives() {
        assert_eq!(relu(&[-1.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn all_negative_input_blocks_everything() {
        let x = [-3.0, -0.5, -1e-9];
        assert!(relu(&x).iter().all(|&v| v == 0.0));
        assert!(relu_backward(&x, &[1.0, 2.0, 3.0])
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn gate_semantics() {
        assert_eq!(relu_backward(&[3.0, -3.0], &[5.0, 5.0]).unwrap(), vec![5.0, 0.0]);
        assert_eq!(relu_backward(&[0.0], &[7.0]).unwrap(), vec![0.0]);
        assert!(relu_backward(&[1.0], &[1.0, 2.0]).is_err());
    }
}
