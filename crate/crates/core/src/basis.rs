//! Marginal cubic B-spline bases on `[0, 1]` and the tensor-product design.
//!
//! Knots are equidistant and extended three steps beyond each boundary, so
//! every marginal basis of dimension `d` has `d - 3` interior intervals and
//! the knot vector `t_m = (m - 3) h`, `m = 0..=d + 3`, with `h = 1 / (d - 3)`.
//! Basis function `B_k` is supported on `[t_k, t_{k+4}]`.
//!
//! Tensor-product indices put coordinate 1 slowest, matching
//! `K_j = I ⊗ ... ⊗ K̃_j ⊗ ... ⊗ I`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor;

pub const DEGREE: usize = 3;
const ORDER: usize = DEGREE + 1;

/// Number of rows accumulated per partial cross-product during assembly.
/// Fixed so that the floating-point summation order is independent of the
/// thread count.
const ASSEMBLY_CHUNK: usize = 2048;

/// Values of the nonzero B-splines of `degree` on knot span `span`
/// (`knots[span] <= x <= knots[span + 1]`), i.e. `B_{span-degree}..=B_span`.
///
/// This is the triangular de Boor scheme; `out` must hold `degree + 1` values.
pub fn nonzero_basis_values(knots: &[f64], span: usize, degree: usize, x: f64, out: &mut [f64]) {
    debug_assert!(out.len() > degree);
    let mut left = [0.0f64; 8];
    let mut right = [0.0f64; 8];
    out[0] = 1.0;
    for j in 1..=degree {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let tmp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        out[j] = saved;
    }
}

/// The nonzero block of a marginal basis at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalEval {
    /// Index of the first (possibly) nonzero basis function.
    pub offset: usize,
    pub values: [f64; ORDER],
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalBasis {
    dim: usize,
    spacing: f64,
    knots: Vec<f64>,
    averages: Vec<f64>,
}

/// Builds the cubic basis of dimension `d` on `[0, 1]`.
pub fn make_marginal_basis(d: usize) -> Result<MarginalBasis> {
    MarginalBasis::new(d)
}

impl MarginalBasis {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < ORDER {
            return Err(Error::InvalidBasis(format!(
                "cubic basis needs at least {ORDER} functions, got {dim}"
            )));
        }
        let intervals = dim - DEGREE;
        let spacing = 1.0 / intervals as f64;
        let knots: Vec<f64> = (0..dim + ORDER)
            .map(|m| (m as f64 - DEGREE as f64) * spacing)
            .collect();
        let mut basis = MarginalBasis {
            dim,
            spacing,
            knots,
            averages: Vec::new(),
        };
        basis.averages = basis.integrals_over_unit_interval();
        Ok(basis)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// `A = (∫₀¹ B_1, ..., ∫₀¹ B_d)`.
    pub fn averages(&self) -> &[f64] {
        &self.averages
    }

    /// Knot span index `m` with `t_m <= x < t_{m+1}`; `x = 1` uses the last
    /// interior interval.
    fn span(&self, x: f64) -> usize {
        let interval = ((x / self.spacing).floor() as usize).min(self.dim - ORDER);
        interval + DEGREE
    }

    /// Evaluates the (at most four) nonzero basis functions at `x`.
    pub fn eval(&self, x: f64) -> Result<MarginalEval> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfDomain { value: x, row: None });
        }
        let span = self.span(x);
        let mut values = [0.0; ORDER];
        nonzero_basis_values(&self.knots, span, DEGREE, x, &mut values);
        Ok(MarginalEval {
            offset: span - DEGREE,
            values,
        })
    }

    /// All `d` basis values at `x` as a dense vector.
    pub fn eval_dense(&self, x: f64) -> Result<Vec<f64>> {
        let e = self.eval(x)?;
        let mut out = vec![0.0; self.dim];
        out[e.offset..e.offset + ORDER].copy_from_slice(&e.values);
        Ok(out)
    }

    /// Integrals of each basis function over `[0, 1]`, from
    /// `∫_{-∞}^x B_{k,3} = (t_{k+4} - t_k)/4 · Σ_{i≥k} B_{i,4}(x)` on the knot
    /// vector extended by one more knot on the right.
    fn integrals_over_unit_interval(&self) -> Vec<f64> {
        let mut knots4 = self.knots.clone();
        knots4.push(*self.knots.last().unwrap() + self.spacing);
        let tail_sums = |x: f64, span: usize| -> Vec<f64> {
            // values of B_{span-4..=span, 4}
            let mut vals = [0.0; ORDER + 1];
            nonzero_basis_values(&knots4, span, DEGREE + 1, x, &mut vals);
            let mut full = vec![0.0; self.dim + 1];
            for (r, v) in vals.iter().enumerate() {
                let i = span as isize - (DEGREE + 1) as isize + r as isize;
                if (0..=self.dim as isize).contains(&i) {
                    full[i as usize] = *v;
                }
            }
            // suffix sums Σ_{i ≥ k}
            for k in (0..self.dim).rev() {
                full[k] += full[k + 1];
            }
            full
        };
        let at_zero = tail_sums(0.0, DEGREE);
        let at_one = tail_sums(1.0, self.dim - 1);
        (0..self.dim)
            .map(|k| {
                let scale = (self.knots[k + ORDER] - self.knots[k]) / ORDER as f64;
                scale * (at_one[k] - at_zero[k])
            })
            .collect()
    }
}

/// Evaluates a basis at `x`, returning the first nonzero index and the values.
pub fn eval_marginal(basis: &MarginalBasis, x: f64) -> Result<MarginalEval> {
    basis.eval(x)
}

/// A sparse design row: sorted column indices and values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRow {
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseRow {
    pub fn dot(&self, b: &[f64]) -> f64 {
        self.cols.iter().zip(&self.vals).map(|(&c, v)| v * b[c]).sum()
    }

    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (&c, &v) in self.cols.iter().zip(&self.vals) {
            out[c] += v;
        }
        out
    }
}

fn check_dims(bases: &[MarginalBasis], x: &[f64]) -> Result<()> {
    if bases.is_empty() {
        return Err(Error::InvalidBasis("no marginal bases".into()));
    }
    if x.len() != bases.len() {
        return Err(Error::DimensionMismatch {
            expected: bases.len(),
            got: x.len(),
            context: "point dimension vs number of bases",
        });
    }
    Ok(())
}

/// Writes the `4^p` tensor-product entries of one point into `cols`/`vals`.
fn fill_row(bases: &[MarginalBasis], strides: &[usize], x: &[f64], cols: &mut [u32], vals: &mut [f64]) -> Result<()> {
    let p = bases.len();
    let mut evals = [MarginalEval {
        offset: 0,
        values: [0.0; ORDER],
    }; 16];
    if p > evals.len() {
        return Err(Error::InvalidBasis(format!("at most {} coordinates supported", evals.len())));
    }
    for j in 0..p {
        evals[j] = bases[j].eval(x[j])?;
    }
    let base: usize = (0..p).map(|j| evals[j].offset * strides[j]).sum();
    let width = ORDER.pow(p as u32);
    let mut local = [0usize; 16];
    for e in 0..width {
        // odometer over local indices, last coordinate fastest
        let mut rem = e;
        for j in (0..p).rev() {
            local[j] = rem % ORDER;
            rem /= ORDER;
        }
        let mut idx = base;
        let mut v = 1.0;
        for j in 0..p {
            idx += local[j] * strides[j];
            v *= evals[j].values[local[j]];
        }
        cols[e] = idx as u32;
        vals[e] = v;
    }
    Ok(())
}

/// Tensor-product design row at `x` (length `D`, at most `4^p` nonzeros).
pub fn design_row(bases: &[MarginalBasis], x: &[f64]) -> Result<SparseRow> {
    check_dims(bases, x)?;
    let dims: Vec<usize> = bases.iter().map(|b| b.dim()).collect();
    let strides = tensor::strides(&dims);
    let width = ORDER.pow(bases.len() as u32);
    let mut cols = vec![0u32; width];
    let mut vals = vec![0.0; width];
    fill_row(bases, &strides, x, &mut cols, &mut vals)?;
    Ok(SparseRow {
        cols: cols.into_iter().map(|c| c as usize).collect(),
        vals,
    })
}

/// Upper triangle (diagonal included) of a symmetric sparse matrix in CSR
/// form, with the pattern of the tensor B-spline overlap stencil: entries
/// `(a, b)` whose digits differ by at most 3 in every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricSparse {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SymmetricSparse {
    /// Empty matrix with the overlap stencil pattern for the shape `dims`.
    pub fn stencil(dims: &[usize], reach: usize) -> Self {
        let n: usize = dims.iter().product();
        let strides = tensor::strides(dims);
        let p = dims.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        let mut dg = vec![0usize; p];
        let mut lo = vec![0usize; p];
        let mut hi = vec![0usize; p];
        let mut cur = vec![0usize; p];
        for a in 0..n {
            tensor::digits(a, dims, &mut dg);
            for j in 0..p {
                lo[j] = dg[j].saturating_sub(reach);
                hi[j] = (dg[j] + reach).min(dims[j] - 1);
            }
            cur.copy_from_slice(&lo);
            loop {
                let b: usize = cur.iter().zip(&strides).map(|(c, s)| c * s).sum();
                if b >= a {
                    cols.push(b as u32);
                }
                // advance odometer, last coordinate fastest
                let mut j = p;
                let mut exhausted = true;
                while j > 0 {
                    j -= 1;
                    if cur[j] < hi[j] {
                        cur[j] += 1;
                        exhausted = false;
                        break;
                    }
                    cur[j] = lo[j];
                }
                if exhausted {
                    break;
                }
            }
            row_ptr.push(cols.len());
        }
        let nnz = cols.len();
        SymmetricSparse {
            n,
            row_ptr,
            cols,
            vals: vec![0.0; nnz],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_upper(&self) -> usize {
        self.cols.len()
    }

    /// Iterates `(row, col, value)` over the stored upper triangle.
    pub fn iter_upper(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |a| {
            (self.row_ptr[a]..self.row_ptr[a + 1]).map(move |k| (a, self.cols[k] as usize, self.vals[k]))
        })
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let row = &self.cols[self.row_ptr[a]..self.row_ptr[a + 1]];
        match row.binary_search(&(b as u32)) {
            Ok(k) => self.vals[self.row_ptr[a] + k],
            Err(_) => 0.0,
        }
    }

    /// Adds `rowᵀ row` for a sparse row whose columns are sorted and lie
    /// inside the stencil.
    fn add_outer(&mut self, cols: &[u32], vals: &[f64]) {
        for (i, (&a, &va)) in cols.iter().zip(vals).enumerate() {
            if va == 0.0 {
                continue;
            }
            let a = a as usize;
            let start = self.row_ptr[a];
            let row = &self.cols[start..self.row_ptr[a + 1]];
            let mut k = 0;
            for (&b, &vb) in cols[i..].iter().zip(&vals[i..]) {
                while row[k] != b {
                    k += 1;
                }
                self.vals[start + k] += va * vb;
            }
        }
    }

    fn add_assign(&mut self, other: &SymmetricSparse) {
        for (v, o) in self.vals.iter_mut().zip(&other.vals) {
            *v += o;
        }
    }

    /// Symmetric matrix-vector product.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for a in 0..self.n {
            for k in self.row_ptr[a]..self.row_ptr[a + 1] {
                let b = self.cols[k] as usize;
                let v = self.vals[k];
                y[a] += v * x[b];
                if b != a {
                    y[b] += v * x[a];
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for (a, b, v) in self.iter_upper() {
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
        m
    }
}

/// Tensor-product design for a fixed set of points.
#[derive(Debug, Clone)]
pub struct TensorDesign {
    bases: Vec<MarginalBasis>,
    dims: Vec<usize>,
    n: usize,
    width: usize,
    cols: Vec<u32>,
    vals: Vec<f64>,
    btb: SymmetricSparse,
}

/// Assembles the sparse design rows and `BᵀB` for points `x` (row-major
/// `n × p`, every coordinate in `[0, 1]`).
pub fn build_design(bases: &[MarginalBasis], x: &[f64]) -> Result<TensorDesign> {
    TensorDesign::new(bases.to_vec(), x)
}

impl TensorDesign {
    pub fn new(bases: Vec<MarginalBasis>, x: &[f64]) -> Result<Self> {
        if bases.is_empty() {
            return Err(Error::InvalidBasis("no marginal bases".into()));
        }
        let p = bases.len();
        if x.is_empty() {
            return Err(Error::EmptyData("design has no points".into()));
        }
        if !x.len().is_multiple_of(p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: x.len() % p,
                context: "flattened points length not a multiple of p",
            });
        }
        let n = x.len() / p;
        let dims: Vec<usize> = bases.iter().map(|b| b.dim()).collect();
        let strides = tensor::strides(&dims);
        let width = ORDER.pow(p as u32);

        let mut cols = vec![0u32; n * width];
        let mut vals = vec![0.0; n * width];
        cols.par_chunks_mut(width)
            .zip(vals.par_chunks_mut(width))
            .enumerate()
            .try_for_each(|(i, (c, v))| {
                fill_row(&bases, &strides, &x[i * p..(i + 1) * p], c, v).map_err(|e| match e {
                    Error::OutOfDomain { value, .. } => Error::OutOfDomain { value, row: Some(i) },
                    other => other,
                })
            })?;

        let template = SymmetricSparse::stencil(&dims, DEGREE);
        let chunk_rows = ASSEMBLY_CHUNK;
        let partials: Vec<SymmetricSparse> = cols
            .par_chunks(width * chunk_rows)
            .zip(vals.par_chunks(width * chunk_rows))
            .map(|(cc, vv)| {
                let mut part = template.clone();
                for (c, v) in cc.chunks(width).zip(vv.chunks(width)) {
                    part.add_outer(c, v);
                }
                part
            })
            .collect();
        let mut btb = template;
        for part in &partials {
            btb.add_assign(part);
        }

        Ok(TensorDesign {
            bases,
            dims,
            n,
            width,
            cols,
            vals,
            btb,
        })
    }

    pub fn bases(&self) -> &[MarginalBasis] {
        &self.bases
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn p(&self) -> usize {
        self.dims.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `D = ∏ d_j`.
    pub fn num_coefs(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn row(&self, i: usize) -> SparseRow {
        let r = i * self.width..(i + 1) * self.width;
        SparseRow {
            cols: self.cols[r.clone()].iter().map(|&c| c as usize).collect(),
            vals: self.vals[r].to_vec(),
        }
    }

    pub fn btb(&self) -> &SymmetricSparse {
        &self.btb
    }

    /// `B b`.
    pub fn mul(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.num_coefs());
        self.cols
            .chunks(self.width)
            .zip(self.vals.chunks(self.width))
            .map(|(c, v)| c.iter().zip(v).map(|(&k, x)| x * b[k as usize]).sum())
            .collect()
    }

    /// `Bᵀ v`.
    pub fn tmul(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.n);
        let mut out = vec![0.0; self.num_coefs()];
        for ((c, w), &vi) in self.cols.chunks(self.width).zip(self.vals.chunks(self.width)).zip(v) {
            for (&k, x) in c.iter().zip(w) {
                out[k as usize] += x * vi;
            }
        }
        out
    }

    /// `‖y − B b‖²`.
    pub fn residual_sum_of_squares(&self, y: &[f64], b: &[f64]) -> f64 {
        self.mul(b).iter().zip(y).map(|(f, yi)| (yi - f) * (yi - f)).sum()
    }
}

/// Evaluates the tensor spline with coefficients `b` at `x`.
pub fn eval_spline(bases: &[MarginalBasis], b: &[f64], x: &[f64]) -> Result<f64> {
    Ok(design_row(bases, x)?.dot(b))
}
