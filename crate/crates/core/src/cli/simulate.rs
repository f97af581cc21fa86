//! Simulation harness: uniform random designs on the unit cube, known test
//! functions plus Gaussian noise, and the MSE of the posterior-mean fit.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::PriorConfig;
use super::fit::Problem;
use crate::diagnostics::quantile;
use crate::sampler::{posterior_mean_b, SamplerConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    /// `sin(2π‖x‖₂)`, any `p`.
    F1,
    /// `sin(2π√(3x₁² + x₂² + x₃²/3))`, `p = 3`.
    F2,
    /// Identically zero.
    Zero,
}

impl TestFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        use std::f64::consts::TAU;
        match self {
            TestFunction::F1 => (TAU * x.iter().map(|v| v * v).sum::<f64>().sqrt()).sin(),
            TestFunction::F2 => (TAU * (3.0 * x[0] * x[0] + x[1] * x[1] + x[2] * x[2] / 3.0).sqrt()).sin(),
            TestFunction::Zero => 0.0,
        }
    }
}

impl std::str::FromStr for TestFunction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1" => Ok(TestFunction::F1),
            "f2" => Ok(TestFunction::F2),
            "zero" => Ok(TestFunction::Zero),
            other => Err(Error::Config(format!("unknown test function '{other}' (f1, f2, zero)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub function: TestFunction,
    pub p: usize,
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    pub replicates: usize,
    pub seed: u64,
    pub chains: usize,
    pub prior: PriorConfig,
    pub sampler: SamplerConfig,
}

impl SimScenario {
    pub fn new(function: TestFunction, p: usize, n: usize, d: usize) -> Self {
        SimScenario {
            function,
            p,
            n,
            d,
            sigma: 0.5,
            replicates: 1,
            seed: 1,
            chains: 1,
            prior: PriorConfig::default(),
            sampler: SamplerConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.function == TestFunction::F2 && self.p != 3 {
            return Err(Error::Config(format!("f2 requires p = 3, got {}", self.p)));
        }
        if self.p == 0 || self.n < 2 || self.d < 4 || self.replicates == 0 || self.chains == 0 {
            return Err(Error::Config(
                "scenario needs p ≥ 1, n ≥ 2, d ≥ 4, at least one replicate and one chain".into(),
            ));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::Config(format!("noise sd must be non-negative, got {}", self.sigma)));
        }
        self.sampler.validate(self.p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    pub mse: f64,
    /// Wall-clock seconds for sampling (all chains), excluding setup.
    pub sampling_seconds: f64,
    pub total_seconds: f64,
    pub acceptance: f64,
    /// Posterior median of `τ_j²` (standardized scale), per coordinate.
    pub tau2_median: Vec<f64>,
    pub hessian_modifications: usize,
}

/// Uniform design and noisy responses for one replicate.
pub fn draw_data(s: &SimScenario, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..s.n * s.p).map(|_| rng.random::<f64>()).collect();
    let f: Vec<f64> = x.chunks(s.p).map(|xi| s.function.eval(xi)).collect();
    let noise = Normal::new(0.0, s.sigma).expect("validated sigma");
    let y = f.iter().map(|v| v + noise.sample(&mut rng)).collect();
    (x, f, y)
}

pub fn run_replicate(s: &SimScenario, r: usize) -> Result<ReplicateResult> {
    let start = Instant::now();
    let seed = s.seed.wrapping_add(r as u64);
    let (x, f, y) = draw_data(s, seed);
    let problem = Problem::build(&x, &vec![s.d; s.p], &s.prior)?;
    let sampler = SamplerConfig { seed, ..s.sampler.clone() };
    let t0 = Instant::now();
    let chains = problem.sample(&y, &sampler, s.chains)?;
    let sampling_seconds = t0.elapsed().as_secs_f64();
    let mean_b = posterior_mean_b(&chains);
    let (y_mean, y_scale) = (chains[0].y_mean, chains[0].y_scale);
    let fitted = problem.design.mul(&mean_b);
    let mse = fitted
        .iter()
        .zip(&f)
        .map(|(fh, fv)| (y_mean + y_scale * fh - fv).powi(2))
        .sum::<f64>()
        / s.n as f64;
    let (acc, props) = chains
        .iter()
        .fold((0, 0), |(a, p), c| (a + c.stats.mh_accepted, p + c.stats.mh_proposals));
    let tau2_median = (0..s.p)
        .map(|j| {
            let all: Vec<f64> = chains.iter().flat_map(|c| c.rho_trace(j)).map(f64::exp).collect();
            quantile(&all, 0.5)
        })
        .collect();
    Ok(ReplicateResult {
        replicate: r,
        seed,
        mse,
        sampling_seconds,
        total_seconds: start.elapsed().as_secs_f64(),
        acceptance: if props == 0 { f64::NAN } else { acc as f64 / props as f64 },
        tau2_median,
        hessian_modifications: chains.iter().map(|c| c.stats.hessian_modifications).sum(),
    })
}

/// Runs every replicate (concurrently) in replicate order.
pub fn simulate(s: &SimScenario) -> Result<Vec<ReplicateResult>> {
    s.validate()?;
    (0..s.replicates).into_par_iter().map(|r| run_replicate(s, r)).collect()
}

/// Replicate-level CSV.
pub fn write_results_csv(path: &Path, s: &SimScenario, results: &[ReplicateResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["function", "p", "n", "d", "sigma", "replicate", "seed", "mse", "sampling_seconds", "total_seconds", "acceptance", "hessian_modifications"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=s.p).map(|j| format!("tau2_median_{j}")));
    w.write_record(&header)?;
    let tag = serde_json::to_value(s.function)?.as_str().unwrap_or_default().to_string();
    for r in results {
        let mut rec = vec![
            tag.clone(),
            s.p.to_string(),
            s.n.to_string(),
            s.d.to_string(),
            s.sigma.to_string(),
            r.replicate.to_string(),
            r.seed.to_string(),
            r.mse.to_string(),
            r.sampling_seconds.to_string(),
            r.total_seconds.to_string(),
            r.acceptance.to_string(),
            r.hessian_modifications.to_string(),
        ];
        rec.extend(r.tau2_median.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_functions() {
        assert!(TestFunction::F1.eval(&[0.0, 0.0]).abs() < 1e-15);
        assert!((TestFunction::F1.eval(&[0.25, 0.0]) - 1.0).abs() < 1e-15);
        // √(3·(1/√12)²) = 1/2 → sin(π) = 0
        let v = TestFunction::F2.eval(&[1.0 / 12f64.sqrt(), 0.0, 0.0]);
        assert!(v.abs() < 1e-12);
        assert!((TestFunction::F2.eval(&[0.0, 0.0, (3.0f64 / 16.0).sqrt()]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn f2_requires_three_coordinates() {
        let s = SimScenario::new(TestFunction::F2, 2, 100, 5);
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn noiseless_zero_is_recovered() {
        let mut s = SimScenario::new(TestFunction::Zero, 2, 200, 5);
        s.sigma = 0.0;
        s.sampler.iterations = 300;
        s.sampler.burn_in = 100;
        let r = simulate(&s).unwrap();
        assert!(r[0].mse < 1e-4, "mse {}", r[0].mse);
    }

    #[test]
    fn data_are_deterministic() {
        let s = SimScenario::new(TestFunction::F1, 3, 50, 5);
        assert_eq!(draw_data(&s, 4), draw_data(&s, 4));
        assert_ne!(draw_data(&s, 4).0, draw_data(&s, 5).0);
    }
}
