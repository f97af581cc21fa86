//! Updates of the log-smoothing variances `ρ`: Taylored Metropolis–Hastings
//! with a Hessian-modified Gaussian proposal, and monotone Newton steps for
//! initialization.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::penalty::{grad_hess_rho, log_fcp_rho, PenaltyEigenstructure, QuadraticForms};
use crate::priors::SmoothingPrior;

/// Default eigenvalue cap `δ` of the modified Hessian.
pub const DEFAULT_DELTA: f64 = std::f64::consts::FRAC_1_PI;
/// Maximum number of step halvings per Newton step.
pub const MAX_HALVINGS: usize = 10;

/// Replaces every eigenvalue `λ` of the symmetric `h` by `min(λ, -δ)`.
pub fn modify_hessian(h: &DMatrix<f64>, delta: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(h.clone());
    let capped = eig.eigenvalues.map(|l| l.min(-delta));
    &eig.eigenvectors * DMatrix::from_diagonal(&capped) * eig.eigenvectors.transpose()
}

/// Gaussian second-order approximation `N(ρ - H̃⁻¹u, -H̃⁻¹)` of the `ρ` full
/// conditional around a point.
#[derive(Debug, Clone)]
pub struct TaylorProposal {
    pub mean: DVector<f64>,
    /// Eigenvectors of `H̃` (columns).
    vectors: DMatrix<f64>,
    /// `-λ̃ ≥ δ`, the precisions along `vectors`.
    precisions: DVector<f64>,
    /// Whether any eigenvalue had to be capped.
    pub modified: bool,
}

impl TaylorProposal {
    pub fn at(
        es: &PenaltyEigenstructure,
        prior: &SmoothingPrior,
        rho: &[f64],
        qf: &QuadraticForms,
        delta: f64,
    ) -> Option<Self> {
        let (u, h) = grad_hess_rho(es, rho, qf, prior);
        Self::from_derivs(rho, u, h, delta)
    }

    /// Proposal from the gradient `u` and Hessian `h` of the log target at `rho`.
    pub fn from_derivs(rho: &[f64], u: Vec<f64>, h: DMatrix<f64>, delta: f64) -> Option<Self> {
        if u.iter().any(|v| !v.is_finite()) || h.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let eig = SymmetricEigen::new(h);
        let modified = eig.eigenvalues.iter().any(|&l| l > -delta);
        let precisions = eig.eigenvalues.map(|l| -(l.min(-delta)));
        let vectors = eig.eigenvectors;
        // -H̃⁻¹u = V diag(1/(-λ̃)) Vᵀ u
        let proj = vectors.transpose() * DVector::from_vec(u);
        let step = &vectors * proj.component_div(&precisions);
        let mean = DVector::from_column_slice(rho) + step;
        Some(TaylorProposal {
            mean,
            vectors,
            precisions,
            modified,
        })
    }

    /// `mean + V diag((-λ̃)^{-½}) z`.
    pub fn sample_with(&self, z: &[f64]) -> Vec<f64> {
        let scaled = DVector::from_iterator(
            z.len(),
            z.iter().zip(self.precisions.iter()).map(|(zi, pr)| zi / pr.sqrt()),
        );
        (&self.mean + &self.vectors * scaled).as_slice().to_vec()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let p = x.len() as f64;
        let c = self.vectors.transpose() * (DVector::from_column_slice(x) - &self.mean);
        let quad: f64 = c.iter().zip(self.precisions.iter()).map(|(ci, pr)| pr * ci * ci).sum();
        let log_det: f64 = self.precisions.iter().map(|v| v.ln()).sum();
        -0.5 * p * (2.0 * std::f64::consts::PI).ln() + 0.5 * log_det - 0.5 * quad
    }
}

/// Outcome of one `ρ` update.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoMove {
    pub rho: Vec<f64>,
    pub accepted: bool,
    /// Proposal or target evaluated to a non-finite value and was rejected.
    pub nonfinite: bool,
    pub hessian_modified: bool,
}

/// Log density with its gradient and Hessian.
pub trait LogTarget {
    fn value(&self, x: &[f64]) -> f64;
    fn derivs(&self, x: &[f64]) -> (Vec<f64>, DMatrix<f64>);
}

/// The `ρ` full conditional at fixed quadratic forms.
pub struct RhoTarget<'a> {
    pub es: &'a PenaltyEigenstructure,
    pub prior: &'a SmoothingPrior,
    pub qf: &'a QuadraticForms,
}

impl LogTarget for RhoTarget<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        log_fcp_rho(self.es, x, self.qf, self.prior)
    }

    fn derivs(&self, x: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        grad_hess_rho(self.es, x, self.qf, self.prior)
    }
}

fn proposal_at<T: LogTarget + ?Sized>(target: &T, x: &[f64], delta: f64) -> Option<TaylorProposal> {
    let (u, h) = target.derivs(x);
    TaylorProposal::from_derivs(x, u, h, delta)
}

/// One Taylored MH step on any target, with a caller-supplied standard
/// normal vector `z` and log-uniform `log_u`.
pub fn taylored_mh_with<T: LogTarget + ?Sized>(target: &T, x: &[f64], delta: f64, z: &[f64], log_u: f64) -> RhoMove {
    let reject = |nonfinite, modified| RhoMove {
        rho: x.to_vec(),
        accepted: false,
        nonfinite,
        hessian_modified: modified,
    };
    let Some(fwd) = proposal_at(target, x, delta) else {
        return reject(true, false);
    };
    let star = fwd.sample_with(z);
    let Some(rev) = proposal_at(target, &star, delta) else {
        return reject(true, fwd.modified);
    };
    let log_alpha = target.value(&star) - target.value(x) + rev.log_density(x) - fwd.log_density(&star);
    if !log_alpha.is_finite() {
        return reject(true, fwd.modified);
    }
    if log_u < log_alpha {
        RhoMove {
            rho: star,
            accepted: true,
            nonfinite: false,
            hessian_modified: fwd.modified,
        }
    } else {
        reject(false, fwd.modified)
    }
}

/// One Taylored MH step on the `ρ` full conditional.
pub fn mh_rho_with(
    es: &PenaltyEigenstructure,
    prior: &SmoothingPrior,
    rho: &[f64],
    qf: &QuadraticForms,
    delta: f64,
    z: &[f64],
    log_u: f64,
) -> RhoMove {
    taylored_mh_with(&RhoTarget { es, prior, qf }, rho, delta, z, log_u)
}

pub fn mh_rho<R: Rng + ?Sized>(
    es: &PenaltyEigenstructure,
    prior: &SmoothingPrior,
    rho: &[f64],
    qf: &QuadraticForms,
    delta: f64,
    rng: &mut R,
) -> RhoMove {
    let z: Vec<f64> = (0..rho.len()).map(|_| rng.sample(StandardNormal)).collect();
    let log_u = rng.random::<f64>().ln();
    mh_rho_with(es, prior, rho, qf, delta, &z, log_u)
}

/// Newton step towards the mode of a target, halving the step until the
/// target does not decrease. Returns `x` unchanged if no halving succeeds.
pub fn damped_newton_step<T: LogTarget + ?Sized>(target: &T, x: &[f64], delta: f64) -> RhoMove {
    let unchanged = |modified| RhoMove {
        rho: x.to_vec(),
        accepted: false,
        nonfinite: false,
        hessian_modified: modified,
    };
    let Some(prop) = proposal_at(target, x, delta) else {
        return RhoMove {
            nonfinite: true,
            ..unchanged(false)
        };
    };
    let base = target.value(x);
    let step: Vec<f64> = prop.mean.iter().zip(x).map(|(m, r)| m - r).collect();
    let mut t = 1.0;
    for _ in 0..=MAX_HALVINGS {
        let cand: Vec<f64> = x.iter().zip(&step).map(|(r, s)| r + t * s).collect();
        let val = target.value(&cand);
        if val.is_finite() && val >= base {
            return RhoMove {
                rho: cand,
                accepted: true,
                nonfinite: false,
                hessian_modified: prop.modified,
            };
        }
        t *= 0.5;
    }
    unchanged(prop.modified)
}

pub fn newton_step_rho(
    es: &PenaltyEigenstructure,
    prior: &SmoothingPrior,
    rho: &[f64],
    qf: &QuadraticForms,
    delta: f64,
) -> RhoMove {
    damped_newton_step(&RhoTarget { es, prior, qf }, rho, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::SmoothingPrior;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn modify_hessian_caps_eigenvalues() {
        let h = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 0.5]);
        let m = modify_hessian(&h, 0.25);
        assert!((m[(0, 0)] + 2.0).abs() < 1e-12);
        assert!((m[(1, 1)] + 0.25).abs() < 1e-12);

        let neg = DMatrix::from_row_slice(2, 2, &[-3.0, 1.0, 1.0, -2.0]);
        assert!((modify_hessian(&neg, 0.1) - &neg).amax() < 1e-12);

        let zero = DMatrix::<f64>::zeros(3, 3);
        let m = modify_hessian(&zero, DEFAULT_DELTA);
        assert!((m + DMatrix::identity(3, 3) * DEFAULT_DELTA).amax() < 1e-12);
    }

    #[test]
    fn proposal_density_is_gaussian() {
        let es = PenaltyEigenstructure::for_dims(&[5, 6]).unwrap();
        let prior = SmoothingPrior::weibull(2, 1.0);
        let qf = QuadraticForms(vec![0.7, 2.5]);
        let prop = TaylorProposal::at(&es, &prior, &[0.2, -0.4], &qf, DEFAULT_DELTA).unwrap();
        // precision matrix -H̃ recovered from the density's Hessian via finite differences
        let x0 = prop.mean.as_slice().to_vec();
        assert_eq!(prop.sample_with(&[0.0, 0.0]), x0);
        let h = 1e-3;
        let f = |a: f64, b: f64| prop.log_density(&[x0[0] + a, x0[1] + b]);
        let hxy = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
        let (_, hess) = grad_hess_rho(&es, &[0.2, -0.4], &qf, &prior);
        let ht = modify_hessian(&hess, DEFAULT_DELTA);
        assert!((hxy - ht[(0, 1)]).abs() < 1e-5);
    }

    #[test]
    fn newton_steps_are_monotone() {
        let es = PenaltyEigenstructure::for_dims(&[8, 6, 5]).unwrap();
        let prior = SmoothingPrior::inverse_gamma(3, 1.0, 0.01);
        let qf = QuadraticForms(vec![0.01, 3.0, 40.0]);
        let mut rho = vec![5.0, -5.0, 0.0];
        let mut last = log_fcp_rho(&es, &rho, &qf, &prior);
        for _ in 0..100 {
            rho = newton_step_rho(&es, &prior, &rho, &qf, DEFAULT_DELTA).rho;
            let val = log_fcp_rho(&es, &rho, &qf, &prior);
            assert!(val >= last);
            last = val;
        }
        let (u, _) = grad_hess_rho(&es, &rho, &qf, &prior);
        assert!(u.iter().all(|g| g.abs() < 1e-6), "gradient {u:?}");
    }

    #[test]
    fn one_dimensional_chain_matches_target() {
        // ρ | b for p = 1 is a univariate density; compare the MH histogram to quadrature.
        let es = PenaltyEigenstructure::for_dims(&[7]).unwrap();
        let prior = SmoothingPrior::weibull(1, 2.0);
        let qf = QuadraticForms(vec![1.3]);
        let (lo, hi, bins) = (-8.0, 4.0, 48);
        let width = (hi - lo) / bins as f64;
        let target: Vec<f64> = (0..bins)
            .map(|k| {
                (0..200)
                    .map(|s| {
                        let r = lo + width * (k as f64 + (s as f64 + 0.5) / 200.0);
                        log_fcp_rho(&es, &[r], &qf, &prior).exp()
                    })
                    .sum::<f64>()
            })
            .collect();
        let total: f64 = target.iter().sum();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rho = vec![0.0];
        let mut hist = vec![0.0; bins];
        let (m, mut acc) = (200_000, 0);
        for _ in 0..m {
            let mv = mh_rho(&es, &prior, &rho, &qf, DEFAULT_DELTA, &mut rng);
            acc += mv.accepted as usize;
            rho = mv.rho;
            let k = ((rho[0] - lo) / width).floor();
            if k >= 0.0 && (k as usize) < bins {
                hist[k as usize] += 1.0;
            }
        }
        let tv: f64 = hist
            .iter()
            .zip(&target)
            .map(|(h, t)| (h / m as f64 - t / total).abs())
            .sum::<f64>()
            * 0.5;
        assert!(tv < 0.02, "total variation {tv}");
        assert!(acc as f64 / m as f64 > 0.5);
    }

    #[test]
    fn nonfinite_targets_are_rejected() {
        let es = PenaltyEigenstructure::for_dims(&[5]).unwrap();
        let prior = SmoothingPrior::weibull(1, 1.0);
        let qf = QuadraticForms(vec![f64::NAN]);
        let mv = mh_rho_with(&es, &prior, &[0.0], &qf, DEFAULT_DELTA, &[0.3], -0.1);
        assert!(mv.nonfinite && !mv.accepted);
        assert_eq!(mv.rho, vec![0.0]);
    }

    /// `-½ (x-m)ᵀ P (x-m)` with `P` positive definite.
    struct Quadratic {
        m: Vec<f64>,
        p: DMatrix<f64>,
    }

    impl LogTarget for Quadratic {
        fn value(&self, x: &[f64]) -> f64 {
            let d = DVector::from_column_slice(x) - DVector::from_column_slice(&self.m);
            -0.5 * (d.transpose() * &self.p * &d)[(0, 0)]
        }

        fn derivs(&self, x: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
            let d = DVector::from_column_slice(x) - DVector::from_column_slice(&self.m);
            let g = -(&self.p * d);
            (g.as_slice().to_vec(), -self.p.clone())
        }
    }

    #[test]
    fn gaussian_target_is_always_accepted() {
        let t = Quadratic {
            m: vec![1.5],
            p: DMatrix::from_element(1, 1, 4.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut x = vec![-3.0];
        for _ in 0..1000 {
            let z = [rng.sample::<f64, _>(StandardNormal)];
            // log u just below 0 rejects any move with α < 1
            let mv = taylored_mh_with(&t, &x, DEFAULT_DELTA, &z, -1e-12);
            assert!(mv.accepted);
            x = mv.rho;
        }
    }

    #[test]
    fn zero_noise_proposal_is_the_newton_point() {
        let es = PenaltyEigenstructure::for_dims(&[5, 6]).unwrap();
        let prior = SmoothingPrior::weibull(2, 1.0);
        let qf = QuadraticForms(vec![0.7, 2.5]);
        let rho = [0.2, -0.4];
        let (u, h) = grad_hess_rho(&es, &rho, &qf, &prior);
        let ht = modify_hessian(&h, DEFAULT_DELTA);
        let want = DVector::from_column_slice(&rho) - ht.lu().solve(&DVector::from_vec(u)).unwrap();
        let prop = TaylorProposal::at(&es, &prior, &rho, &qf, DEFAULT_DELTA).unwrap();
        let got = prop.sample_with(&[0.0, 0.0]);
        assert!((got[0] - want[0]).abs() < 1e-12 && (got[1] - want[1]).abs() < 1e-12);
    }

    #[test]
    fn newton_on_quadratic_converges_in_one_step() {
        let t = Quadratic {
            m: vec![0.75],
            p: DMatrix::from_element(1, 1, 2.0),
        };
        let mv = damped_newton_step(&t, &[-4.0], DEFAULT_DELTA);
        assert!((mv.rho[0] - 0.75).abs() < 1e-12);
        let again = damped_newton_step(&t, &mv.rho, DEFAULT_DELTA);
        assert_eq!(again.rho, mv.rho);
    }

    #[test]
    fn newton_is_stationary_at_the_mode() {
        let es = PenaltyEigenstructure::for_dims(&[6]).unwrap();
        let prior = SmoothingPrior::weibull(1, 1.0);
        let qf = QuadraticForms(vec![2.0]);
        let mut rho = vec![0.0];
        for _ in 0..50 {
            rho = newton_step_rho(&es, &prior, &rho, &qf, DEFAULT_DELTA).rho;
        }
        let next = newton_step_rho(&es, &prior, &rho, &qf, DEFAULT_DELTA).rho;
        assert!((next[0] - rho[0]).abs() < 1e-12);
    }
}
