use crate::error::{ensure_dim, Result};
use crate::tensor::DenseParams;

/// Dot product with four interleaved partial sums, combined in a fixed order.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y = W·x + b`.
pub fn dense_forward(x: &[f64], p: &DenseParams) -> Result<Vec<f64>> {
    ensure_dim("dense_forward", "input length", p.in_dim, x.len())?;
    Ok(p.weights
        .chunks_exact(p.in_dim.max(1))
        .take(p.out_dim)
        .zip(&p.biases)
        .map(|(row, &b)| if p.in_dim == 0 { b } else { dot(row, x) + b })
        .collect())
}

/// Returns `(Wᵀ·grad_y, grads)` where `grads` holds `grad_y ⊗ x` and `grad_y`.
pub fn dense_backward(
    x: &[f64],
    p: &DenseParams,
    grad_y: &[f64],
) -> Result<(Vec<f64>, DenseParams)> {
    let mut grads = p.zeros_like();
    let gx = dense_backward_into(x, p, grad_y, &mut grads, true)?.expect("input gradient requested");
    Ok((gx, grads))
}

pub(crate) fn dense_backward_into(
    x: &[f64],
    p: &DenseParams,
    grad_y: &[f64],
    grads: &mut DenseParams,
    want_input: bool,
) -> Result<Option<Vec<f64>>> {
    ensure_dim("dense_backward", "input length", p.in_dim, x.len())?;
    ensure_dim("dense_backward", "output gradient length", p.out_dim, grad_y.len())?;
    ensure_dim("dense_backward", "gradient weights length", p.weights.len(), grads.weights.len())?;
    let n = p.in_dim;
    let mut gx = want_input.then(|| vec![0.0; n]);
    for (o, &g) in grad_y.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        grads.biases[o] += g;
        for (w, &xv) in grads.weights[o * n..(o + 1) * n].iter_mut().zip(x) {
            *w += g * xv;
        }
        if let Some(gx) = gx.as_mut() {
            for (v, &w) in gx.iter_mut().zip(&p.weights[o * n..(o + 1) * n]) {
                *v += g * w;
            }
        }
    }
    Ok(gx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{central_difference, max_rel_err, random_vec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_passes_input_through() {
        let x = vec![0.25, -1.5, 3.0];
        assert_eq!(dense_forward(&x, &DenseParams::identity(3)).unwrap(), x);
    }

    #[test]
    fn hand_dot_product() {
        let p = DenseParams::new(1, 2, vec![1.0, 2.0], vec![3.0]).unwrap();
        assert_eq!(dense_forward(&[4.0, 5.0], &p).unwrap(), vec![17.0]);
    }

    #[test]
    fn rejects_wrong_input_length() {
        let p = DenseParams::zeros(2, 3);
        assert!(dense_forward(&[1.0, 2.0], &p).is_err());
        assert!(dense_backward(&[1.0, 2.0, 3.0], &p, &[1.0]).is_err());
    }

    #[test]
    fn dot_matches_plain_sum_on_integers() {
        let a: Vec<f64> = (0..11).map(f64::from).collect();
        let b: Vec<f64> = (0..11).map(|i| f64::from(i) - 3.0).collect();
        let plain: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert_eq!(dot(&a, &b), plain);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (out_dim, in_dim) = (5, 7);
        let p = DenseParams::new(
            out_dim,
            in_dim,
            random_vec(&mut rng, out_dim * in_dim),
            random_vec(&mut rng, out_dim),
        )
        .unwrap();
        let x = random_vec(&mut rng, in_dim);
        let probe = random_vec(&mut rng, out_dim);
        let loss = |x: &[f64], p: &DenseParams| -> f64 {
            dense_forward(x, p).unwrap().iter().zip(&probe).map(|(a, b)| a * b).sum()
        };
        let (gx, gp) = dense_backward(&x, &p, &probe).unwrap();
        let nx = central_difference(&x, 1e-6, |v| loss(v, &p));
        assert!(max_rel_err(&gx, &nx) < 1e-6);
        let nw = central_difference(&p.weights, 1e-6, |v| {
            let mut q = p.clone();
            q.weights.copy_from_slice(v);
            loss(&x, &q)
        });
        assert!(max_rel_err(&gp.weights, &nw) < 1e-6);
        let nb = central_difference(&p.biases, 1e-6, |v| {
            let mut q = p.clone();
            q.biases.copy_from_slice(v);
            loss(&x, &q)
        });
        assert!(max_rel_err(&gp.biases, &nb) < 1e-6);
    }
}
