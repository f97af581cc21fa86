//! Mode-wise operations on coefficient vectors viewed as row-major tensors.
//!
//! A vector of length `D = d_1 * ... * d_p` is interpreted with coordinate 1
//! as the slowest-varying index, so `l = ((i_1 * d_2 + i_2) * d_3 + i_3) ...`.
//! With this ordering, a Kronecker product `M_1 ⊗ ... ⊗ M_p` acts on the
//! vector as the sequence of mode products with each `M_j`.

use nalgebra::DMatrix;

/// Row-major strides for the tensor shape `dims`.
pub fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for j in (0..dims.len().saturating_sub(1)).rev() {
        s[j] = s[j + 1] * dims[j + 1];
    }
    s
}

/// Splits the shape around `mode` into `(outer, len, inner)` block sizes.
pub fn split(dims: &[usize], mode: usize) -> (usize, usize, usize) {
    let outer = dims[..mode].iter().product();
    let inner = dims[mode + 1..].iter().product();
    (outer, dims[mode], inner)
}

/// Mixed-radix digits of a flat index.
pub fn digits(mut l: usize, dims: &[usize], out: &mut [usize]) {
    for j in (0..dims.len()).rev() {
        out[j] = l % dims[j];
        l /= dims[j];
    }
}

/// Mode-`mode` product with a dense `r × d_mode` matrix.
///
/// Returns the new vector; the shape changes from `d_mode` to `r` in that mode.
pub fn mode_product(x: &[f64], dims: &[usize], mode: usize, m: &DMatrix<f64>) -> Vec<f64> {
    let (outer, len, inner) = split(dims, mode);
    debug_assert_eq!(x.len(), outer * len * inner);
    debug_assert_eq!(m.ncols(), len);
    let rows = m.nrows();
    let mut y = vec![0.0; outer * rows * inner];
    for o in 0..outer {
        let xb = &x[o * len * inner..(o + 1) * len * inner];
        let yb = &mut y[o * rows * inner..(o + 1) * rows * inner];
        for a in 0..rows {
            let ya = &mut yb[a * inner..(a + 1) * inner];
            for k in 0..len {
                let w = m[(a, k)];
                if w == 0.0 {
                    continue;
                }
                let xk = &xb[k * inner..(k + 1) * inner];
                for (yi, xi) in ya.iter_mut().zip(xk) {
                    *yi += w * xi;
                }
            }
        }
    }
    y
}

/// Contracts mode `mode` against the weight row `w`, removing that mode.
pub fn contract_mode(x: &[f64], dims: &[usize], mode: usize, w: &[f64]) -> Vec<f64> {
    let (outer, len, inner) = split(dims, mode);
    debug_assert_eq!(x.len(), outer * len * inner);
    debug_assert_eq!(w.len(), len);
    let mut y = vec![0.0; outer * inner];
    for o in 0..outer {
        let xb = &x[o * len * inner..(o + 1) * len * inner];
        let yb = &mut y[o * inner..(o + 1) * inner];
        for (k, &wk) in w.iter().enumerate() {
            for (yi, xi) in yb.iter_mut().zip(&xb[k * inner..(k + 1) * inner]) {
                *yi += wk * xi;
            }
        }
    }
    y
}

/// Applies `M_1 ⊗ ... ⊗ M_p` to `x` without forming the product.
pub fn kron_apply(mats: &[&DMatrix<f64>], x: &[f64]) -> Vec<f64> {
    let mut dims: Vec<usize> = mats.iter().map(|m| m.ncols()).collect();
    let mut cur = x.to_vec();
    for (j, m) in mats.iter().enumerate() {
        cur = mode_product(&cur, &dims, j, m);
        dims[j] = m.nrows();
    }
    cur
}
