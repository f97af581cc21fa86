//! Full-conditional precision `P = BᵀB/σ² + K(e^ρ)` and Gibbs draws of `b`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::envelope::EnvelopeCholesky;
use crate::basis::TensorDesign;
use crate::penalty::PenaltyEigenstructure;
use crate::{Error, Result};

/// Relative jitter added to the diagonal after a failed factorization.
pub const JITTER_REL: f64 = 1e-10;
/// Number of tenfold jitter escalations before giving up.
pub const JITTER_ESCALATIONS: usize = 3;

/// Largest factor the sampler will allocate, in stored entries (2 GiB of f64).
pub const MAX_FACTOR_ENTRIES: usize = 1 << 28;

/// Envelope size of the factor for basis sizes `dims` under the best tensor
/// ordering, where the half-bandwidth is about `3·D/max_j d_j`.
pub fn estimated_factor_entries(dims: &[usize]) -> usize {
    let d: usize = dims.iter().product();
    let slowest = dims.iter().copied().max().unwrap_or(1).max(1);
    d.saturating_mul(3 * (d / slowest) + 1)
}

/// Rejects basis sizes whose factor would exceed [`MAX_FACTOR_ENTRIES`].
pub fn check_problem_size(dims: &[usize]) -> Result<()> {
    let entries = estimated_factor_entries(dims);
    if entries > MAX_FACTOR_ENTRIES {
        return Err(Error::Config(format!(
            "basis sizes {dims:?} need a Cholesky factor of about {:.1} GiB (limit {} GiB); reduce the basis dimensions",
            entries as f64 * 8.0 / (1u64 << 30) as f64,
            (MAX_FACTOR_ENTRIES * 8) >> 30
        )));
    }
    Ok(())
}

/// One stored upper-triangle entry of `P` and where it lands in the factor.
#[derive(Debug, Clone)]
struct Entry {
    slot: usize,
    btb: f64,
    /// `K_j(a, b)` for every `j`; nonzero for at most one `j` off the diagonal.
    kron: Vec<(u8, f64)>,
}

/// Reusable factorization workspace for the `b` full conditional.
#[derive(Debug, Clone)]
pub struct PrecisionSystem {
    chol: EnvelopeCholesky,
    entries: Vec<Entry>,
    diag_slots: Vec<usize>,
    /// Jitter escalations used by the most recent factorization.
    last_jitter_level: usize,
}

impl PrecisionSystem {
    pub fn new(design: &TensorDesign, es: &PenaltyEigenstructure) -> Result<Self> {
        if design.dims() != es.dims() {
            return Err(Error::DimensionMismatch {
                expected: design.num_coefs(),
                got: es.num_coefs(),
                context: "penalty and design shapes",
            });
        }
        check_problem_size(design.dims())?;
        let n = design.num_coefs();
        let btb = design.btb();
        let pattern: Vec<(usize, usize)> = btb.iter_upper().map(|(a, b, _)| (a, b)).collect();
        let chol = EnvelopeCholesky::analyze(n, &pattern, Some(design.dims()));
        let p = es.p();
        let entries = btb
            .iter_upper()
            .map(|(a, b, v)| Entry {
                slot: chol.slot(a, b).expect("pattern lies inside its envelope"),
                btb: v,
                kron: (0..p)
                    .filter_map(|j| {
                        let k = es.kron_entry(j, a, b);
                        (k != 0.0).then_some((j as u8, k))
                    })
                    .collect(),
            })
            .collect();
        let diag_slots = (0..n).map(|a| chol.slot(a, a).unwrap()).collect();
        Ok(PrecisionSystem {
            chol,
            entries,
            diag_slots,
            last_jitter_level: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.chol.dim()
    }

    pub fn last_jitter_level(&self) -> usize {
        self.last_jitter_level
    }

    fn assemble(&mut self, sigma2: f64, rho: &[f64]) -> f64 {
        let inv_tau2: Vec<f64> = rho.iter().map(|r| (-r).exp()).collect();
        let inv_s2 = 1.0 / sigma2;
        let vals = self.chol.values_mut();
        vals.fill(0.0);
        for e in &self.entries {
            let k: f64 = e.kron.iter().map(|&(j, v)| v * inv_tau2[j as usize]).sum();
            vals[e.slot] = e.btb * inv_s2 + k;
        }
        let trace: f64 = self.diag_slots.iter().map(|&s| vals[s]).sum();
        trace / self.diag_slots.len() as f64
    }

    /// Factorizes `P(σ², ρ)`, escalating diagonal jitter on failure.
    pub fn factorize(&mut self, sigma2: f64, rho: &[f64]) -> Result<()> {
        let mut mean_diag = self.assemble(sigma2, rho);
        if !mean_diag.is_finite() {
            return Err(Error::NumericalBreakdown(format!(
                "non-finite precision matrix (sigma2 = {sigma2}, rho = {rho:?})"
            )));
        }
        let mut last = None;
        for level in 0..=JITTER_ESCALATIONS + 1 {
            if level > 0 {
                mean_diag = self.assemble(sigma2, rho);
                let jitter = JITTER_REL * 10f64.powi(level as i32 - 1) * mean_diag;
                let vals = self.chol.values_mut();
                for &s in &self.diag_slots {
                    vals[s] += jitter;
                }
            }
            match self.chol.factorize() {
                Ok(()) => {
                    self.last_jitter_level = level;
                    if level > 0 {
                        log::debug!("precision factorized with jitter level {level}");
                    }
                    return Ok(());
                }
                Err(e) => last = Some(e),
            }
        }
        let e = last.unwrap();
        Err(Error::NumericalBreakdown(format!(
            "Cholesky of the b precision failed at row {} (pivot {:e}) after {} jitter escalations",
            e.row, e.pivot, JITTER_ESCALATIONS
        )))
    }

    /// Posterior mean plus `L⁻ᵀ z` for the current factor; `z = 0` gives the mean.
    pub fn draw_with(&self, bty: &[f64], sigma2: f64, z: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = bty.iter().map(|v| v / sigma2).collect();
        let mut x = self.chol.permute(&r);
        self.chol.solve_lower(&mut x);
        for (v, zi) in x.iter_mut().zip(z) {
            *v += zi;
        }
        self.chol.solve_upper(&mut x);
        self.chol.unpermute(&x)
    }

    /// Factorizes and draws `b ~ N(P⁻¹ Bᵀy/σ², P⁻¹)`.
    pub fn draw<R: Rng + ?Sized>(
        &mut self,
        bty: &[f64],
        sigma2: f64,
        rho: &[f64],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        self.factorize(sigma2, rho)?;
        let z: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        Ok(self.draw_with(bty, sigma2, &z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_size_guard() {
        assert_eq!(estimated_factor_entries(&[10, 10, 10]), 1000 * 301);
        assert!(check_problem_size(&[40, 10, 10]).is_ok());
        assert!(check_problem_size(&[10; 4]).is_ok());
        assert!(matches!(check_problem_size(&[10; 5]), Err(Error::Config(_))));
    }
    use crate::basis::{MarginalBasis, TensorDesign};
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (TensorDesign, PenaltyEigenstructure, Vec<f64>) {
        let dims = [4, 5];
        let n = 60;
        let mut x = Vec::new();
        for i in 0..n {
            x.push(((i as f64) * 0.618_034) % 1.0);
            x.push(((i as f64) * 0.414_214 + 0.1) % 1.0);
        }
        let bases = dims.iter().map(|&d| MarginalBasis::new(d).unwrap()).collect();
        let design = TensorDesign::new(bases, &x).unwrap();
        let es = PenaltyEigenstructure::for_dims(&dims).unwrap();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        (design, es, y)
    }

    fn dense_precision(design: &TensorDesign, es: &PenaltyEigenstructure, s2: f64, rho: &[f64]) -> DMatrix<f64> {
        let d = design.num_coefs();
        let mut b = DMatrix::zeros(design.n(), d);
        for i in 0..design.n() {
            for (k, v) in design.row(i).to_dense(d).into_iter().enumerate() {
                b[(i, k)] = v;
            }
        }
        let mut p = b.transpose() * &b / s2;
        for a in 0..d {
            for c in 0..d {
                for j in 0..es.p() {
                    p[(a, c)] += es.kron_entry(j, a, c) * (-rho[j]).exp();
                }
            }
        }
        p
    }

    #[test]
    fn mean_matches_dense_solve() {
        let (design, es, y) = setup();
        let bty = design.tmul(&y);
        let (s2, rho) = (0.3, [0.5, -1.0]);
        let mut sys = PrecisionSystem::new(&design, &es).unwrap();
        sys.factorize(s2, &rho).unwrap();
        let mean = sys.draw_with(&bty, s2, &vec![0.0; sys.dim()]);
        let p = dense_precision(&design, &es, s2, &rho);
        let want = p.cholesky().unwrap().solve(&(DVector::from_vec(bty) / s2));
        for (a, b) in mean.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn draws_have_dense_mean_and_covariance() {
        let (design, es, y) = setup();
        let bty = design.tmul(&y);
        let (s2, rho) = (0.5, [0.0, 0.3]);
        let mut sys = PrecisionSystem::new(&design, &es).unwrap();
        let d = sys.dim();
        let p = dense_precision(&design, &es, s2, &rho);
        let cov = p.clone().try_inverse().unwrap();
        let mean = &cov * DVector::from_vec(bty.clone()) / s2;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 50_000;
        let mut sum = DVector::<f64>::zeros(d);
        let mut sq = DMatrix::<f64>::zeros(d, d);
        for _ in 0..m {
            let b = DVector::from_vec(sys.draw(&bty, s2, &rho, &mut rng).unwrap());
            let c = &b - &mean;
            sum += &b;
            sq += &c * c.transpose();
        }
        let emp_mean = sum / m as f64;
        let emp_cov = sq / m as f64;
        for k in 0..d {
            let se = (cov[(k, k)] / m as f64).sqrt();
            assert!((emp_mean[k] - mean[k]).abs() < 5.0 * se);
        }
        for a in 0..d {
            for c in 0..d {
                let tol = 5.0 * ((cov[(a, a)] * cov[(c, c)] + cov[(a, c)].powi(2)) / m as f64).sqrt();
                assert!((emp_cov[(a, c)] - cov[(a, c)]).abs() < tol);
            }
        }
    }

    #[test]
    fn breakdown_on_non_finite_input() {
        let (design, es, _) = setup();
        let mut sys = PrecisionSystem::new(&design, &es).unwrap();
        let err = sys.factorize(0.0, &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NumericalBreakdown(_)));
    }

    #[test]
    fn large_noise_shrinks_the_penalized_part() {
        // as σ² grows, K μ → 0: only the penalty null space keeps data signal
        let (design, es, y) = setup();
        let bty = design.tmul(&y);
        let rho = [0.0, 0.0];
        let mut k = DMatrix::zeros(20, 20);
        for a in 0..20 {
            for c in 0..20 {
                k[(a, c)] = (0..2).map(|j| es.kron_entry(j, a, c)).sum::<f64>();
            }
        }
        let mut sys = PrecisionSystem::new(&design, &es).unwrap();
        let mut norms = Vec::new();
        for s2 in [1.0, 1e3, 1e6] {
            sys.factorize(s2, &rho).unwrap();
            let mean = DVector::from_vec(sys.draw_with(&bty, s2, &[0.0; 20]));
            norms.push((&k * mean).norm());
        }
        assert!(norms[1] < 1e-2 * norms[0] && norms[2] < 1e-5 * norms[0], "{norms:?}");
    }
}
