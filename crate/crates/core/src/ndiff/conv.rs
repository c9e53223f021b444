//! Causal 1-D convolution kernels.
//!
//! Kernels are stored lag-major as `[K, C_in, C_out]`: tap `j` multiplies the
//! input `j` steps in the past. Inside networks the convolution runs in
//! "valid" mode, so an input of length `L` yields `L - K + 1` outputs and
//! output `t` is aligned with input position `t + K - 1`.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use super::NdiffError;

/// `output[t] = bias + sum_j kernel[j] * input[t - j]`, with `input[s] = 0` for `s < 0`.
///
/// ```
/// use innovations::ndiff::causal_conv1d;
/// let out = causal_conv1d(&[1.0, 2.0, 3.0], &[0.5, 0.5], 0.0).unwrap();
/// assert_eq!(out, vec![0.5, 1.5, 2.5]);
/// ```
pub fn causal_conv1d(input: &[f64], kernel: &[f64], bias: f64) -> Result<Vec<f64>, NdiffError> {
    if input.is_empty() {
        return Err(NdiffError::EmptySequence);
    }
    if kernel.is_empty() {
        return Err(NdiffError::EmptyKernel);
    }
    let out = (0..input.len())
        .map(|t| {
            kernel
                .iter()
                .enumerate()
                .take(t + 1)
                .fold(bias, |acc, (j, w)| acc + w * input[t - j])
        })
        .collect();
    Ok(out)
}

/// `c = a * b (+ beta * c)` where `a` is `m x k` and `b` is `k x n`, with
/// optional transposition of the stored operands.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    let a = if a_trans {
        ArrayView2::from_shape((k, m), a).expect("gemm lhs").reversed_axes()
    } else {
        ArrayView2::from_shape((m, k), a).expect("gemm lhs")
    };
    let b = if b_trans {
        ArrayView2::from_shape((n, k), b).expect("gemm rhs").reversed_axes()
    } else {
        ArrayView2::from_shape((k, n), b).expect("gemm rhs")
    };
    let mut c = ArrayViewMut2::from_shape((m, n), c).expect("gemm out");
    general_mat_mul(1.0, &a, &b, beta, &mut c);
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub len: usize,
    pub c_in: usize,
    pub kernel: usize,
    pub c_out: usize,
}

impl ConvDims {
    pub fn out_len(&self) -> usize {
        self.len + 1 - self.kernel
    }
}

fn im2col(x: &[f64], d: ConvDims) -> Vec<f64> {
    let lout = d.out_len();
    let width = d.kernel * d.c_in;
    let mut cols = vec![0.0; d.batch * lout * width];
    for b in 0..d.batch {
        for t in 0..lout {
            let row = &mut cols[(b * lout + t) * width..][..width];
            for j in 0..d.kernel {
                let src = (b * d.len + t + d.kernel - 1 - j) * d.c_in;
                row[j * d.c_in..][..d.c_in].copy_from_slice(&x[src..src + d.c_in]);
            }
        }
    }
    cols
}

/// Valid causal convolution without bias: `[B, L, Cin] -> [B, L-K+1, Cout]`.
pub(crate) fn conv_forward(x: &[f64], w: &[f64], d: ConvDims) -> Vec<f64> {
    let rows = d.batch * d.out_len();
    let width = d.kernel * d.c_in;
    let mut y = vec![0.0; rows * d.c_out];
    if d.kernel == 1 {
        gemm(rows, width, d.c_out, x, false, w, false, 0.0, &mut y);
    } else {
        let cols = im2col(x, d);
        gemm(rows, width, d.c_out, &cols, false, w, false, 0.0, &mut y);
    }
    y
}

/// Gradients of [`conv_forward`] with respect to its input and its kernel.
pub(crate) fn conv_backward(
    gy: &[f64],
    x: &[f64],
    w: &[f64],
    d: ConvDims,
    need_input: bool,
    need_weight: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let lout = d.out_len();
    let rows = d.batch * lout;
    let width = d.kernel * d.c_in;
    let cols_owned;
    let cols: &[f64] = if d.kernel == 1 {
        x
    } else {
        cols_owned = im2col(x, d);
        &cols_owned
    };
    let gw = need_weight.then(|| {
        let mut gw = vec![0.0; width * d.c_out];
        gemm(width, rows, d.c_out, cols, true, gy, false, 0.0, &mut gw);
        gw
    });
    let gx = need_input.then(|| {
        let mut gcols = vec![0.0; rows * width];
        gemm(rows, d.c_out, width, gy, false, w, true, 0.0, &mut gcols);
        if d.kernel == 1 {
            return gcols;
        }
        let mut gx = vec![0.0; d.batch * d.len * d.c_in];
        for b in 0..d.batch {
            for t in 0..lout {
                let row = &gcols[(b * lout + t) * width..][..width];
                for j in 0..d.kernel {
                    let dst = (b * d.len + t + d.kernel - 1 - j) * d.c_in;
                    for (g, r) in gx[dst..dst + d.c_in].iter_mut().zip(&row[j * d.c_in..]) {
                        *g += r;
                    }
                }
            }
        }
        gx
    });
    (gx, gw)
}
