//! Priors for the smoothing variances `τ_j²`, expressed as log-kernels in
//! `ρ_j = log τ_j²` (the Jacobian `e^{ρ_j}` is included).
//!
//! - Inverse Gamma `IG(α_j, β_j)`: `log q(ρ) = Σ_j (−α_j ρ_j − β_j e^{−ρ_j})`.
//! - Weibull with shape ½ and rate `λ_j`, density
//!   `½ √λ (τ²)^{−1/2} exp(−√(λ τ²))`: `log q(ρ) = Σ_j (ρ_j/2 − √λ_j e^{ρ_j/2})`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::TensorDesign;
use crate::diagnostics::quantile_sorted;
use crate::error::{Error, Result};
use crate::penalty::PenaltyEigenstructure;
use crate::tensor;

/// Default Inverse Gamma hyperparameters `IG(0.001, 0.001)`.
pub const DEFAULT_IG: (f64, f64) = (0.001, 0.001);
/// Default Weibull rate.
pub const DEFAULT_WEIBULL_RATE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothingPrior {
    InverseGamma { alpha: Vec<f64>, beta: Vec<f64> },
    /// Shape fixed at ½.
    Weibull { rate: Vec<f64> },
}

impl SmoothingPrior {
    pub fn inverse_gamma(p: usize, alpha: f64, beta: f64) -> Self {
        SmoothingPrior::InverseGamma {
            alpha: vec![alpha; p],
            beta: vec![beta; p],
        }
    }

    pub fn weibull(p: usize, rate: f64) -> Self {
        SmoothingPrior::Weibull { rate: vec![rate; p] }
    }

    /// Checks positivity of every hyperparameter and the coordinate count.
    pub fn validate(&self, p: usize) -> Result<()> {
        let (name, vals): (&str, Vec<&Vec<f64>>) = match self {
            SmoothingPrior::InverseGamma { alpha, beta } => ("inverse gamma", vec![alpha, beta]),
            SmoothingPrior::Weibull { rate } => ("weibull", vec![rate]),
        };
        for v in vals {
            if v.len() != p {
                return Err(Error::Config(format!(
                    "{name} prior has {} hyperparameters, expected {p}",
                    v.len()
                )));
            }
            if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                return Err(Error::Config(format!(
                    "{name} prior hyperparameters must be positive, got {bad}"
                )));
            }
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        match self {
            SmoothingPrior::InverseGamma { alpha, .. } => alpha.len(),
            SmoothingPrior::Weibull { rate } => rate.len(),
        }
    }

    /// `log q(ρ)` with constants dropped.
    pub fn log_kernel(&self, rho: &[f64]) -> f64 {
        match self {
            SmoothingPrior::InverseGamma { alpha, beta } => rho
                .iter()
                .zip(alpha.iter().zip(beta))
                .map(|(r, (a, b))| -a * r - b * (-r).exp())
                .sum(),
            SmoothingPrior::Weibull { rate } => rho
                .iter()
                .zip(rate)
                .map(|(r, l)| 0.5 * r - l.sqrt() * (0.5 * r).exp())
                .sum(),
        }
    }

    /// Gradient and Hessian diagonal of [`Self::log_kernel`]; the priors are
    /// independent across coordinates, so the Hessian is diagonal.
    pub fn kernel_derivs(&self, rho: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match self {
            SmoothingPrior::InverseGamma { alpha, beta } => rho
                .iter()
                .zip(alpha.iter().zip(beta))
                .map(|(r, (a, b))| {
                    let t = b * (-r).exp();
                    (-a + t, -t)
                })
                .unzip(),
            SmoothingPrior::Weibull { rate } => rho
                .iter()
                .zip(rate)
                .map(|(r, l)| {
                    let t = l.sqrt() * (0.5 * r).exp();
                    (0.5 - 0.5 * t, -0.25 * t)
                })
                .unzip(),
        }
    }
}

pub fn log_kernel_rho(prior: &SmoothingPrior, rho: &[f64]) -> f64 {
    prior.log_kernel(rho)
}

pub fn kernel_derivs(prior: &SmoothingPrior, rho: &[f64]) -> (Vec<f64>, Vec<f64>) {
    prior.kernel_derivs(rho)
}

/// Settings for [`prior_scaling`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingOptions {
    pub target_sd: f64,
    pub draws: usize,
    pub seed: u64,
    /// Bisection bracket on `log λ`.
    pub log_rate_bracket: (f64, f64),
}

impl Default for ScalingOptions {
    fn default() -> Self {
        ScalingOptions {
            target_sd: 1.0,
            draws: 200,
            seed: 0x5eed_5ca1e,
            log_rate_bracket: (-20.0, 20.0),
        }
    }
}

/// Sample standard deviation of prior function draws at the design points,
/// one per Monte Carlo draw, under a shared Weibull rate `rate`.
///
/// `τ_j² = E_j² / rate` with `E_j ~ Exp(1)` and `b = Q c` with
/// `c_l = z_l / √(Σ_j γ_{j,l} / τ_j²)` on `D⁺` and zero on the null space.
pub fn prior_function_sds(
    design: &TensorDesign,
    es: &PenaltyEigenstructure,
    rate: f64,
    draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = design.n();
    if n < 2 {
        return Err(Error::Scaling(format!(
            "function standard deviation undefined for n = {n} design points"
        )));
    }
    if design.dims() != es.dims() {
        return Err(Error::DimensionMismatch {
            expected: es.num_coefs(),
            got: design.num_coefs(),
            context: "design and penalty dimensions",
        });
    }
    let p = es.p();
    let dims = es.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q: Vec<_> = es.marginals().iter().map(|m| m.eigenvectors()).collect();
    let mut digits = vec![0usize; p];
    let mut sds = Vec::with_capacity(draws);
    for _ in 0..draws {
        let inv_tau2: Vec<f64> = (0..p)
            .map(|_| {
                let e: f64 = Exp1.sample(&mut rng);
                rate / (e * e)
            })
            .collect();
        let c: Vec<f64> = (0..es.num_coefs())
            .map(|l| {
                let z: f64 = StandardNormal.sample(&mut rng);
                tensor::digits(l, dims, &mut digits);
                let prec: f64 = (0..p)
                    .map(|j| es.marginals()[j].eigenvalues()[digits[j]] * inv_tau2[j])
                    .sum();
                if prec > 0.0 {
                    z / prec.sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        let b = tensor::kron_apply(&q, &c);
        let f = design.mul(&b);
        let mean = f.iter().sum::<f64>() / n as f64;
        let var = f.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        sds.push(var.sqrt());
    }
    Ok(sds)
}

/// Shared Weibull rate `λ` such that the Monte Carlo median of the empirical
/// standard deviation of prior function draws at the design points equals
/// `target_sd`.
///
/// Draws use common random numbers across rates. Under a shared rate,
/// `τ_j² = E_j²/λ` and `b ∝ λ^{−1/2}`, so the median at rate `λ` is exactly
/// `λ^{−1/2}` times the unit-rate median; the Monte Carlo draws are therefore
/// computed once and the bisection on `log λ` runs on that median.
pub fn prior_scaling(
    design: &TensorDesign,
    es: &PenaltyEigenstructure,
    opts: &ScalingOptions,
) -> Result<f64> {
    if !(opts.target_sd.is_finite() && opts.target_sd > 0.0) {
        return Err(Error::Scaling(format!(
            "target standard deviation must be positive, got {}",
            opts.target_sd
        )));
    }
    if opts.draws == 0 {
        return Err(Error::Scaling("need at least one Monte Carlo draw".into()));
    }
    let mut sds = prior_function_sds(design, es, 1.0, opts.draws, opts.seed)?;
    sds.sort_by(f64::total_cmp);
    let unit_median = quantile_sorted(&sds, 0.5);
    let median_at = |log_rate: f64| unit_median * (-0.5 * log_rate).exp();

    let (mut lo, mut hi) = opts.log_rate_bracket;
    let (m_lo, m_hi) = (median_at(lo), median_at(hi));
    // median is decreasing in log λ
    if !(m_lo >= opts.target_sd && m_hi <= opts.target_sd) || !unit_median.is_finite() {
        return Err(Error::Scaling(format!(
            "target sd {} not bracketed: median sd is {m_lo:.6e} at log λ = {lo} and {m_hi:.6e} at log λ = {hi} \
             (unit-rate median {unit_median:.6e})",
            opts.target_sd
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if median_at(mid) > opts.target_sd {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_design, make_marginal_basis};
    use proptest::prelude::*;

    fn fd_check(prior: &SmoothingPrior, rho: &[f64]) {
        let h = 1e-5;
        let (g, d2) = prior.kernel_derivs(rho);
        for j in 0..rho.len() {
            let mut rp = rho.to_vec();
            let mut rm = rho.to_vec();
            rp[j] += h;
            rm[j] -= h;
            let fd = (prior.log_kernel(&rp) - prior.log_kernel(&rm)) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-6_f64.max(1e-4 * g[j].abs()), "grad j={j}: {fd} vs {}", g[j]);
            let (gp, _) = prior.kernel_derivs(&rp);
            let (gm, _) = prior.kernel_derivs(&rm);
            let fd2 = (gp[j] - gm[j]) / (2.0 * h);
            assert!((fd2 - d2[j]).abs() <= 1e-6_f64.max(1e-4 * d2[j].abs()));
        }
    }

    #[test]
    fn weibull_reference_values() {
        let w = SmoothingPrior::weibull(1, 1.0);
        assert!((w.log_kernel(&[0.0]) + 1.0).abs() < 1e-15);
        let (g, h) = w.kernel_derivs(&[0.0]);
        assert!(g[0].abs() < 1e-15);
        assert!((h[0] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn inverse_gamma_reference_values() {
        let ig = SmoothingPrior::inverse_gamma(1, 0.001, 0.001);
        assert!((ig.log_kernel(&[0.0]) + 0.001).abs() < 1e-15);
        let (g, h) = ig.kernel_derivs(&[0.0]);
        assert!(g[0].abs() < 1e-15);
        assert!((h[0] + 0.001).abs() < 1e-15);
    }

    /// Log density of τ² under each prior, including normalizing constants.
    fn log_density_tau2(prior: &SmoothingPrior, t: f64) -> f64 {
        match prior {
            SmoothingPrior::InverseGamma { alpha, beta } => {
                let (a, b) = (alpha[0], beta[0]);
                a * b.ln() - statrs::function::gamma::ln_gamma(a) - (a + 1.0) * t.ln() - b / t
            }
            SmoothingPrior::Weibull { rate } => {
                let l = rate[0];
                (0.5 * l.sqrt()).ln() - 0.5 * t.ln() - (l * t).sqrt()
            }
        }
    }

    #[test]
    fn kernel_ratio_matches_transformed_density() {
        // q(ρ) ∝ p_τ²(e^ρ) e^ρ
        for prior in [SmoothingPrior::weibull(1, 2.5), SmoothingPrior::inverse_gamma(1, 0.7, 1.3)] {
            for (r1, r2) in [(0.0, 1.0), (-2.0, 0.5), (1.5, -3.0)] {
                let lhs = prior.log_kernel(&[r1]) - prior.log_kernel(&[r2]);
                let rhs = (log_density_tau2(&prior, f64::exp(r1)) + r1)
                    - (log_density_tau2(&prior, f64::exp(r2)) + r2);
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weibull_density_integrates_to_one() {
        // numeric check of the rate parametrization: ∫ p(τ²) dτ² = 1,
        // substituting τ² = s² to remove the singularity at zero
        let l = 3.0;
        let prior = SmoothingPrior::weibull(1, l);
        let m = 200_000;
        let upper = 40.0 / l.sqrt();
        let h = upper / m as f64;
        let total: f64 = (0..m)
            .map(|i| {
                let s = (i as f64 + 0.5) * h;
                log_density_tau2(&prior, s * s).exp() * 2.0 * s * h
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flat_limit_of_inverse_gamma() {
        let ig = SmoothingPrior::inverse_gamma(1, 1e-10, 1e-10);
        for i in 0..=100 {
            let r = -5.0 + 0.1 * i as f64;
            assert!(ig.kernel_derivs(&[r]).0[0].abs() < 1e-6);
        }
    }

    #[test]
    fn validation() {
        assert!(SmoothingPrior::weibull(2, 1.0).validate(2).is_ok());
        assert!(SmoothingPrior::weibull(2, 0.0).validate(2).is_err());
        assert!(SmoothingPrior::inverse_gamma(3, 1.0, -1.0).validate(3).is_err());
        assert!(SmoothingPrior::weibull(2, 1.0).validate(3).is_err());
    }

    proptest! {
        #[test]
        fn derivatives_match_finite_differences(
            rho in proptest::collection::vec(-4.0f64..4.0, 3),
            a in 0.001f64..3.0,
            b in 0.001f64..3.0,
            l in 0.01f64..50.0,
        ) {
            fd_check(&SmoothingPrior::inverse_gamma(3, a, b), &rho);
            fd_check(&SmoothingPrior::Weibull { rate: vec![l, 1.0, 0.3] }, &rho);
        }
    }

    fn scaling_design(n: usize) -> (TensorDesign, PenaltyEigenstructure) {
        let bases = vec![make_marginal_basis(6).unwrap(), make_marginal_basis(5).unwrap()];
        let x: Vec<f64> = (0..2 * n).map(|i| (i as f64 * 0.618_033_988_7).fract()).collect();
        let design = build_design(&bases, &x).unwrap();
        let es = PenaltyEigenstructure::for_dims(&[6, 5]).unwrap();
        (design, es)
    }

    #[test]
    fn scaling_is_deterministic_and_monotone() {
        let (design, es) = scaling_design(300);
        let opts = ScalingOptions::default();
        let l1 = prior_scaling(&design, &es, &opts).unwrap();
        let l1b = prior_scaling(&design, &es, &opts).unwrap();
        assert_eq!(l1.to_bits(), l1b.to_bits());
        let l2 = prior_scaling(&design, &es, &ScalingOptions { target_sd: 2.0, ..opts }).unwrap();
        assert!(l2 < l1);
        // sd ∝ λ^{-1/2}: doubling the target divides the rate by four
        assert!((l1 / l2 - 4.0).abs() < 1e-9);
    }

    #[test]
    fn scaling_hits_target_by_brute_force() {
        // median sd of prior draws at the returned rate equals the target
        let (design, es) = scaling_design(200);
        let opts = ScalingOptions {
            target_sd: 0.8,
            draws: 64,
            ..Default::default()
        };
        let rate = prior_scaling(&design, &es, &opts).unwrap();
        let mut sds = prior_function_sds(&design, &es, rate, opts.draws, opts.seed).unwrap();
        sds.sort_by(f64::total_cmp);
        assert!((quantile_sorted(&sds, 0.5) - 0.8).abs() < 1e-9);
    }

    #[test]
    fn scaling_errors() {
        let (design, es) = scaling_design(1);
        assert!(matches!(
            prior_scaling(&design, &es, &ScalingOptions::default()),
            Err(Error::Scaling(_))
        ));
        let (design, es) = scaling_design(50);
        let err = prior_scaling(
            &design,
            &es,
            &ScalingOptions {
                target_sd: 1e30,
                ..Default::default()
            },
        );
        assert!(matches!(err, Err(Error::Scaling(_))));
    }
}
