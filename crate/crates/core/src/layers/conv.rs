use crate::error::{Error, Result};
use crate::tensor::{FilterBank, LaneTensor};

/// Output `(rows, cols, channels)` of a stride-1 valid convolution.
pub fn conv2d_output_shape(input: &LaneTensor, bank: &FilterBank) -> Result<(usize, usize, usize)> {
    if bank.in_channels != input.channels() {
        return Err(Error::shape(
            "conv2d",
            "input channels",
            bank.in_channels,
            input.channels(),
        ));
    }
    if bank.filter_rows == 0 || bank.filter_rows > input.rows() {
        return Err(Error::shape(
            "conv2d",
            "filter rows (must be 1..=input rows)",
            input.rows(),
            bank.filter_rows,
        ));
    }
    if bank.filter_cols == 0 || bank.filter_cols > input.cols() {
        return Err(Error::shape(
            "conv2d",
            "filter cols (must be 1..=input cols)",
            input.cols(),
            bank.filter_cols,
        ));
    }
    bank.validate()?;
    Ok((
        input.rows() - bank.filter_rows + 1,
        input.cols() - bank.filter_cols + 1,
        bank.num_filters,
    ))
}

/// Kernel weights re-laid out as `[kernel_offset][filter]`, so one input
/// value can update every filter's accumulator with a contiguous sweep.
fn weights_by_offset(bank: &FilterBank) -> Vec<f64> {
    let nf = bank.num_filters;
    let kl = bank.kernel_len();
    let mut wt = vec![0.0; nf * kl];
    for f in 0..nf {
        for k in 0..kl {
            wt[k * nf + f] = bank.weights[f * kl + k];
        }
    }
    wt
}

/// Multi-channel valid cross-correlation, stride 1, no padding.
///
/// Each output cell is the window dot product summed over all input
/// channels, accumulated from zero in (row, col, channel) order, plus the
/// filter bias.
pub fn conv2d_valid(input: &LaneTensor, bank: &FilterBank) -> Result<LaneTensor> {
    let (out_rows, out_cols, nf) = conv2d_output_shape(input, bank)?;
    let wt = weights_by_offset(bank);
    let span = bank.filter_cols * input.channels();
    let x = input.as_slice();

    let mut out = LaneTensor::zeros(out_rows, out_cols, nf);
    let mut acc = vec![0.0; nf];
    for r in 0..out_rows {
        for c in 0..out_cols {
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut k = 0;
            for dr in 0..bank.filter_rows {
                let start = input.index(r + dr, c, 0);
                for &xv in &x[start..start + span] {
                    let wrow = &wt[k * nf..(k + 1) * nf];
                    for (a, &w) in acc.iter_mut().zip(wrow) {
                        *a += xv * w;
                    }
                    k += 1;
                }
            }
            let o = out.index(r, c, 0);
            let cell = &mut out.as_mut_slice()[o..o + nf];
            for ((dst, &a), &b) in cell.iter_mut().zip(&acc).zip(&bank.biases) {
                *dst = a + b;
            }
        }
    }
    Ok(out)
}

/// Gradients of a downstream scalar with respect to the input and the bank.
pub fn conv2d_backward(
    input: &LaneTensor,
    bank: &FilterBank,
    grad_out: &LaneTensor,
) -> Result<(LaneTensor, FilterBank)> {
    let mut grads = bank.zeros_like();
    let grad_input = conv2d_backward_into(input, bank, grad_out, &mut grads, true)?
        .expect("input gradient requested");
    Ok((grad_input, grads))
}

/// Accumulates parameter gradients into `grads`; returns the input gradient
/// when `want_input` is set.
pub(crate) fn conv2d_backward_into(
    input: &LaneTensor,
    bank: &FilterBank,
    grad_out: &LaneTensor,
    grads: &mut FilterBank,
    want_input: bool,
) -> Result<Option<LaneTensor>> {
    let (out_rows, out_cols, nf) = conv2d_output_shape(input, bank)?;
    if grad_out.shape() != (out_rows, out_cols, nf) {
        let (gr, gc, gch) = grad_out.shape();
        let (dimension, expected, actual) = if gr != out_rows {
            ("grad_out rows", out_rows, gr)
        } else if gc != out_cols {
            ("grad_out cols", out_cols, gc)
        } else {
            ("grad_out channels", nf, gch)
        };
        return Err(Error::shape("conv2d_backward", dimension, expected, actual));
    }
    if grads.weights.len() != bank.weights.len() || grads.biases.len() != bank.biases.len() {
        return Err(Error::shape(
            "conv2d_backward",
            "gradient bank size",
            bank.weights.len(),
            grads.weights.len(),
        ));
    }

    let kl = bank.kernel_len();
    let span = bank.filter_cols * input.channels();
    let x = input.as_slice();
    let g = grad_out.as_slice();
    let wt = if want_input { weights_by_offset(bank) } else { Vec::new() };
    let mut grad_input = want_input.then(|| LaneTensor::zeros(input.rows(), input.cols(), input.channels()));

    for r in 0..out_rows {
        for c in 0..out_cols {
            let o = grad_out.index(r, c, 0);
            let gcell = &g[o..o + nf];
            if gcell.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (f, &gf) in gcell.iter().enumerate() {
                if gf == 0.0 {
                    continue;
                }
                grads.biases[f] += gf;
                let gw = &mut grads.weights[f * kl..(f + 1) * kl];
                for dr in 0..bank.filter_rows {
                    let start = input.index(r + dr, c, 0);
                    let dst = &mut gw[dr * span..(dr + 1) * span];
                    for (w, &xv) in dst.iter_mut().zip(&x[start..start + span]) {
                        *w += gf * xv;
                    }
                }
            }
            if let Some(gi) = grad_input.as_mut() {
                let mut k = 0;
                for dr in 0..bank.filter_rows {
                    let start = input.index(r + dr, c, 0);
                    let dst = &mut gi.as_mut_slice()[start..start + span];
                    for v in dst.iter_mut() {
                        let wrow = &wt[k * nf..(k + 1) * nf];
                        let mut s = 0.0;
                        for (&gf, &w) in gcell.iter().zip(wrow) {
                            s += gf * w;
                        }
                        *v += s;
                        k += 1;
                    }
                }
            }
        }
    }
    Ok(grad_input)
}
