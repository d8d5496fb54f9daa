//! Central finite-difference verification of analytic gradients.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_dim, Result};
use crate::tensor::ParamArrays;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Check at most this many randomly chosen entries per array; `None` checks all.
    pub max_entries_per_array: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-6,
            tolerance: 1e-5,
            max_entries_per_array: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub arrays: Vec<ArrayCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.arrays.iter().map(|a| a.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }

    pub fn entries_checked(&self) -> usize {
        self.arrays.iter().map(|a| a.checked).sum()
    }
}

/// `|a − n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compares `analytic` against `(f(θ+h) − f(θ−h)) / 2h` entry by entry.
///
/// `loss` must be deterministic: evaluate with dropout disabled or with
/// frozen masks.
pub fn gradient_check<P, F>(
    params: &P,
    analytic: &P,
    mut loss: F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    P: ParamArrays + Clone,
    F: FnMut(&P) -> f64,
{
    let shapes: Vec<(String, usize)> = params
        .arrays()
        .iter()
        .map(|(n, a)| (n.clone(), a.len()))
        .collect();
    let grads: Vec<Vec<f64>> = analytic.arrays().iter().map(|(_, a)| a.to_vec()).collect();
    ensure_dim("gradient_check", "gradient array count", shapes.len(), grads.len())?;
    for ((_, len), g) in shapes.iter().zip(&grads) {
        ensure_dim("gradient_check", "gradient array length", *len, g.len())?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut probe = params.clone();
    let h = cfg.step;
    let mut arrays = Vec::with_capacity(shapes.len());
    for (array_idx, (name, len)) in shapes.iter().enumerate() {
        let entries: Vec<usize> = match cfg.max_entries_per_array {
            Some(m) if m < *len => {
                let mut v = index::sample(&mut rng, *len, m).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..*len).collect(),
        };
        let mut check = ArrayCheck {
            name: name.clone(),
            checked: entries.len(),
            max_rel_error: 0.0,
            worst_index: None,
            worst_analytic: 0.0,
            worst_numeric: 0.0,
        };
        for i in entries {
            let original = params.arrays()[array_idx].1[i];
            set_entry(&mut probe, array_idx, i, original + h);
            let up = loss(&probe);
            set_entry(&mut probe, array_idx, i, original - h);
            let down = loss(&probe);
            set_entry(&mut probe, array_idx, i, original);
            let numeric = (up - down) / (2.0 * h);
            let a = grads[array_idx][i];
            let err = relative_error(a, numeric);
            if err > check.max_rel_error || check.worst_index.is_none() {
                check.max_rel_error = check.max_rel_error.max(err);
                check.worst_index = Some(i);
                check.worst_analytic = a;
                check.worst_numeric = numeric;
            }
        }
        arrays.push(check);
    }
    Ok(GradCheckReport {
        arrays,
        tolerance: cfg.tolerance,
    })
}

fn set_entry<P: ParamArrays>(p: &mut P, array: usize, index: usize, value: f64) {
    let mut views = p.arrays_mut();
    views[array].1[index] = value;
}
