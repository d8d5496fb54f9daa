//! Speed MSE plus a λ-weighted volume MSE.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Result};

/// Weight of the volume term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda: f64,
}

impl LossConfig {
    /// Values outside `[0, 1]` are accepted but logged.
    pub fn new(lambda: f64) -> Self {
        if !(0.0..=1.0).contains(&lambda) {
            warn!("volume weight λ = {lambda} is outside the suggested range [0, 1]");
        }
        LossConfig { lambda }
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { lambda: 0.1 }
    }
}

/// Loss value, its two terms, and the gradients with respect to both predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub speed_term: f64,
    pub volume_term: f64,
    pub grad_u: Vec<f64>,
    pub grad_q: Vec<f64>,
}

fn mse_and_grad(pred: &[f64], target: &[f64], weight: f64) -> (f64, Vec<f64>) {
    if pred.is_empty() {
        return (0.0, Vec::new());
    }
    let n = pred.len() as f64;
    let mse = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| weight * 2.0 * (p - t) / n)
        .collect();
    (mse, grad)
}

/// `mean((ŷ_u − y_u)²) + λ·mean((ŷ_q − y_q)²)`.
///
/// An empty volume pair contributes zero, which is how the speed-only
/// ablation is trained.
pub fn composite_loss(
    pred_u: &[f64],
    pred_q: &[f64],
    target_u: &[f64],
    target_q: &[f64],
    cfg: &LossConfig,
) -> Result<LossValue> {
    ensure_dim("composite_loss", "speed target length", pred_u.len(), target_u.len())?;
    ensure_dim("composite_loss", "volume target length", pred_q.len(), target_q.len())?;
    let (speed_term, grad_u) = mse_and_grad(pred_u, target_u, 1.0);
    let (volume_term, grad_q) = mse_and_grad(pred_q, target_q, cfg.lambda);
    Ok(LossValue {
        total: speed_term + cfg.lambda * volume_term,
        speed_term,
        volume_term,
        grad_u,
        grad_q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{central_difference, max_rel_err};

    #[test]
    fn perfect_prediction_has_zero_loss_and_gradient() {
        let u = [0.2, 0.9];
        let q = [0.5];
        let l = composite_loss(&u, &q, &u, &q, &LossConfig::new(0.3)).unwrap();
        assert_eq!(l.total, 0.0);
        assert!(l.grad_u.iter().chain(&l.grad_q).all(|&g| g == 0.0));
    }

    #[test]
    fn speed_only_at_zero_lambda() {
        let l = composite_loss(&[0.6, 0.4], &[0.3, 0.8], &[0.5, 0.4], &[0.3, 0.8], &LossConfig::new(0.0))
            .unwrap();
        assert!((l.total - 0.005).abs() < 1e-15);
        assert!(l.grad_q.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_in_lambda() {
        // speed diffs [0.2, 0] give mean 0.02, volume diff [sqrt(0.05)] gives 0.05
        let tu = [0.5, 0.5];
        let pu = [0.7, 0.5];
        let tq = [0.1];
        let pq = [0.1 + 0.05f64.sqrt()];
        let a = composite_loss(&pu, &pq, &tu, &tq, &LossConfig::new(0.1)).unwrap();
        let b = composite_loss(&pu, &pq, &tu, &tq, &LossConfig::new(0.2)).unwrap();
        assert!((a.speed_term - 0.02).abs() < 1e-15);
        assert!((a.volume_term - 0.05).abs() < 1e-15);
        assert!((a.total - 0.025).abs() < 1e-15);
        assert!((b.total - 0.030).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let cfg = LossConfig::default();
        assert!(composite_loss(&[0.0], &[], &[0.0, 1.0], &[], &cfg).is_err());
        assert!(composite_loss(&[0.0], &[0.0], &[0.0], &[], &cfg).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let tu = [0.1, 0.7, 0.3];
        let tq = [0.9, 0.2];
        let pu = vec![0.4, 0.5, 0.35];
        let pq = vec![0.6, 0.25];
        let cfg = LossConfig::new(0.4);
        let l = composite_loss(&pu, &pq, &tu, &tq, &cfg).unwrap();
        let nu = central_difference(&pu, 1e-6, |v| composite_loss(v, &pq, &tu, &tq, &cfg).unwrap().total);
        let nq = central_difference(&pq, 1e-6, |v| composite_loss(&pu, v, &tu, &tq, &cfg).unwrap().total);
        assert!(max_rel_err(&l.grad_u, &nu) < 1e-6);
        assert!(max_rel_err(&l.grad_q, &nq) < 1e-6);
    }
}
