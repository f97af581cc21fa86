//! Second-order difference penalties and their Kronecker-sum structure.
//!
//! With marginal eigendecompositions `K̃_j = Q̃_j Γ̃_j Q̃_jᵀ`, the overall penalty
//! `K(τ²) = Σ_j K_j / τ_j²` is diagonalized by `Q = Q̃_1 ⊗ ... ⊗ Q̃_p`, with
//! diagonal entries `Σ_j γ_{j,l} / τ_j²`, where `γ_{j,l}` is the marginal
//! eigenvalue selected by the `j`-th mixed-radix digit of `l`. The
//! log-pseudo-determinant is therefore a sum over the index set `D⁺` of
//! entries where at least one `γ_{j,l}` is positive, and never requires a
//! `D × D` decomposition.
//!
//! Only differences of [`log_fcp_rho`] are meaningful: the additive constant
//! of the log full conditional is fixed to zero.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::priors::SmoothingPrior;
use crate::tensor;

/// Relative threshold below which a marginal eigenvalue counts as zero.
pub const ZERO_EIGEN_REL_TOL: f64 = 1e-10;

/// Null-space dimension of a second-order difference penalty.
pub const MARGINAL_NULLITY: usize = 2;

#[derive(Debug, Clone)]
pub struct MarginalPenalty {
    matrix: DMatrix<f64>,
    eigenvectors: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl MarginalPenalty {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `K̃ = D₂ᵀ D₂`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Columns are eigenvectors, ordered like [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Ascending; the first [`MARGINAL_NULLITY`] are exactly zero.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
}

/// Second-difference penalty of dimension `d` and its eigendecomposition.
pub fn second_diff_penalty(d: usize) -> Result<MarginalPenalty> {
    if d < 4 {
        return Err(Error::InvalidBasis(format!(
            "difference penalty needs d >= 4, got {d}"
        )));
    }
    let mut diff = DMatrix::<f64>::zeros(d - 2, d);
    for r in 0..d - 2 {
        diff[(r, r)] = 1.0;
        diff[(r, r + 1)] = -2.0;
        diff[(r, r + 2)] = 1.0;
    }
    let matrix = diff.transpose() * &diff;

    let eig = SymmetricEigen::new(matrix.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let max = eig.eigenvalues.max();
    let eps = ZERO_EIGEN_REL_TOL * max;
    let mut eigenvalues = Vec::with_capacity(d);
    let mut eigenvectors = DMatrix::<f64>::zeros(d, d);
    for (c, &k) in order.iter().enumerate() {
        let v = eig.eigenvalues[k];
        eigenvalues.push(if v.abs() <= eps { 0.0 } else { v });
        eigenvectors.set_column(c, &eig.eigenvectors.column(k));
    }
    let nullity = eigenvalues.iter().filter(|&&v| v == 0.0).count();
    if nullity != MARGINAL_NULLITY || eigenvalues.iter().any(|&v| v < 0.0) {
        return Err(Error::Penalty(format!(
            "expected exactly {MARGINAL_NULLITY} zero eigenvalues for d={d}, found {nullity} \
             (eigenvalues {eigenvalues:?})"
        )));
    }
    Ok(MarginalPenalty {
        matrix,
        eigenvectors,
        eigenvalues,
    })
}

/// Marginal penalties plus the implicit Kronecker-sum diagonal.
#[derive(Debug, Clone)]
pub struct PenaltyEigenstructure {
    dims: Vec<usize>,
    marginals: Vec<MarginalPenalty>,
    positive_count: usize,
}

pub fn build_eigenstructure(penalties: Vec<MarginalPenalty>) -> Result<PenaltyEigenstructure> {
    PenaltyEigenstructure::new(penalties)
}

impl PenaltyEigenstructure {
    pub fn new(marginals: Vec<MarginalPenalty>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::Penalty("at least one marginal penalty is required".into()));
        }
        let dims: Vec<usize> = marginals.iter().map(|m| m.dim()).collect();
        let mut es = PenaltyEigenstructure {
            dims,
            marginals,
            positive_count: 0,
        };
        es.positive_count = es.positive_indices().count();
        Ok(es)
    }

    /// Second-difference penalties for the given marginal dimensions.
    pub fn for_dims(dims: &[usize]) -> Result<Self> {
        Self::new(dims.iter().map(|&d| second_diff_penalty(d)).collect::<Result<_>>()?)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn p(&self) -> usize {
        self.dims.len()
    }

    pub fn num_coefs(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn marginals(&self) -> &[MarginalPenalty] {
        &self.marginals
    }

    /// `|D⁺|`.
    pub fn positive_count(&self) -> usize {
        self.positive_count
    }

    /// `γ_{j,l}`, recovered from the mixed-radix digits of `l`.
    pub fn gamma(&self, j: usize, l: usize) -> f64 {
        let s = tensor::strides(&self.dims);
        let digit = (l / s[j]) % self.dims[j];
        self.marginals[j].eigenvalues[digit]
    }

    /// Indices `l` with at least one positive `γ_{j,l}`, in increasing order.
    pub fn positive_indices(&self) -> impl Iterator<Item = usize> + '_ {
        let p = self.p();
        let mut digits = vec![0usize; p];
        (0..self.num_coefs()).filter(move |&l| {
            tensor::digits(l, &self.dims, &mut digits);
            digits
                .iter()
                .zip(&self.marginals)
                .any(|(&i, m)| m.eigenvalues[i] > 0.0)
        })
    }

    /// Visits `(γ_{1,l} e^{-ρ_1}, ..., γ_{p,l} e^{-ρ_p})` for every `l ∈ D⁺`.
    fn for_each_positive(&self, rho: &[f64], mut f: impl FnMut(&[f64], f64)) {
        let p = self.p();
        let scaled: Vec<Vec<f64>> = self
            .marginals
            .iter()
            .zip(rho)
            .map(|(m, r)| {
                let s = (-r).exp();
                m.eigenvalues.iter().map(|g| g * s).collect()
            })
            .collect();
        let mut digits = vec![0usize; p];
        let mut terms = vec![0.0; p];
        for _ in 0..self.num_coefs() {
            let mut total = 0.0;
            let mut positive = false;
            for j in 0..p {
                positive |= self.marginals[j].eigenvalues[digits[j]] > 0.0;
                terms[j] = scaled[j][digits[j]];
                total += terms[j];
            }
            if positive {
                f(&terms, total);
            }
            for j in (0..p).rev() {
                digits[j] += 1;
                if digits[j] < self.dims[j] {
                    break;
                }
                digits[j] = 0;
            }
        }
    }

    /// Entry `(a, b)` of `K_j = I ⊗ ... ⊗ K̃_j ⊗ ... ⊗ I`.
    pub fn kron_entry(&self, j: usize, a: usize, b: usize) -> f64 {
        let s = tensor::strides(&self.dims);
        let (da, db) = ((a / s[j]) % self.dims[j], (b / s[j]) % self.dims[j]);
        // all other digits must agree
        if a - da * s[j] != b - db * s[j] {
            return 0.0;
        }
        self.marginals[j].matrix[(da, db)]
    }
}

/// `log Det K(e^ρ) = Σ_{l∈D⁺} log Σ_j γ_{j,l} e^{-ρ_j}`.
pub fn log_pseudo_det(es: &PenaltyEigenstructure, rho: &[f64]) -> f64 {
    assert_eq!(rho.len(), es.p(), "rho has wrong length");
    let mut acc = 0.0;
    es.for_each_positive(rho, |_, s| acc += s.ln());
    acc
}

/// `(bᵀK_1 b, ..., bᵀK_p b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForms(pub Vec<f64>);

impl QuadraticForms {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Computes each `bᵀK_j b` as the sum of squared second differences along
/// mode `j`, without forming `K_j`.
pub fn quadratic_forms(es: &PenaltyEigenstructure, b: &[f64]) -> Result<QuadraticForms> {
    if b.len() != es.num_coefs() {
        return Err(Error::DimensionMismatch {
            expected: es.num_coefs(),
            got: b.len(),
            context: "coefficient vector length",
        });
    }
    let dims = es.dims();
    let out = (0..dims.len())
        .map(|j| {
            let (outer, len, inner) = tensor::split(dims, j);
            let mut acc = 0.0;
            for o in 0..outer {
                let block = &b[o * len * inner..(o + 1) * len * inner];
                for k in 0..len - 2 {
                    let (r0, r1, r2) = (
                        &block[k * inner..(k + 1) * inner],
                        &block[(k + 1) * inner..(k + 2) * inner],
                        &block[(k + 2) * inner..(k + 3) * inner],
                    );
                    for i in 0..inner {
                        let dd = r0[i] - 2.0 * r1[i] + r2[i];
                        acc += dd * dd;
                    }
                }
            }
            acc
        })
        .collect();
    Ok(QuadraticForms(out))
}

/// Log full conditional of `ρ` given `b`, up to an additive constant.
pub fn log_fcp_rho(
    es: &PenaltyEigenstructure,
    rho: &[f64],
    qf: &QuadraticForms,
    prior: &SmoothingPrior,
) -> f64 {
    let quad: f64 = qf.0.iter().zip(rho).map(|(q, r)| q * (-r).exp()).sum();
    0.5 * log_pseudo_det(es, rho) - 0.5 * quad + prior.log_kernel(rho)
}

/// Gradient and Hessian of [`log_fcp_rho`] in one pass over `D⁺`.
pub fn grad_hess_rho(
    es: &PenaltyEigenstructure,
    rho: &[f64],
    qf: &QuadraticForms,
    prior: &SmoothingPrior,
) -> (Vec<f64>, DMatrix<f64>) {
    let p = es.p();
    let mut wsum = vec![0.0; p];
    let mut wprod = DMatrix::<f64>::zeros(p, p);
    let mut w = vec![0.0; p];
    es.for_each_positive(rho, |terms, s| {
        for j in 0..p {
            w[j] = terms[j] / s;
            wsum[j] += w[j];
        }
        for j in 0..p {
            if w[j] == 0.0 {
                continue;
            }
            for k in j..p {
                wprod[(j, k)] += w[j] * w[k];
            }
        }
    });
    let (dprior, d2prior) = prior.kernel_derivs(rho);
    let mut grad = vec![0.0; p];
    let mut hess = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let quad = qf.0[j] * (-rho[j]).exp();
        grad[j] = -0.5 * wsum[j] + 0.5 * quad + dprior[j];
        hess[(j, j)] = -0.5 * (wprod[(j, j)] - wsum[j]) - 0.5 * quad + d2prior[j];
        for k in j + 1..p {
            hess[(j, k)] = -0.5 * wprod[(j, k)];
            hess[(k, j)] = hess[(j, k)];
        }
    }
    (grad, hess)
}
