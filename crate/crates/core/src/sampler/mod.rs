//! MCMC engine: Gibbs draws of `b` and `σ²`, Taylored MH (or Newton, during
//! initialization) for `ρ`, and multi-chain orchestration.
//!
//! The response is standardized before sampling; stored draws of `b` and
//! `σ²` are on the standardized scale and [`ChainOutput`] carries the
//! constants needed to map fitted values back.

pub mod envelope;
pub mod precision;
pub mod rho;

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::TensorDesign;
use crate::penalty::{quadratic_forms, PenaltyEigenstructure};
use crate::priors::SmoothingPrior;
use crate::{Error, Result};

pub use precision::{check_problem_size, PrecisionSystem};
pub use rho::{
    damped_newton_step, mh_rho, mh_rho_with, modify_hessian, newton_step_rho, taylored_mh_with, LogTarget, RhoMove, RhoTarget,
    TaylorProposal, DEFAULT_DELTA,
};

/// Lower bound on `σ²` (standardized scale). Only binds for noise-free data,
/// where `σ²` and `τ²` otherwise contract geometrically towards zero.
pub const SIGMA2_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Total iterations `T`, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub delta: f64,
    /// Iterations whose `ρ` update is a Newton step instead of MH.
    pub newton_steps: usize,
    pub seed: u64,
    pub init_rho: Option<Vec<f64>>,
    pub init_sigma2: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            iterations: 1200,
            burn_in: 200,
            thin: 1,
            delta: DEFAULT_DELTA,
            newton_steps: 100,
            seed: 1,
            init_rho: None,
            init_sigma2: 1.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.init_sigma2.is_finite() && self.init_sigma2 > 0.0) {
            return Err(Error::Config(format!(
                "initial sigma2 must be positive, got {}",
                self.init_sigma2
            )));
        }
        if let Some(r) = &self.init_rho {
            if r.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: r.len(),
                    context: "initial rho",
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("initial rho must be finite".into()));
            }
        }
        Ok(())
    }

    /// Number of retained draws `⌈(T - burn-in) / thin⌉`.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

/// Current values of all parameters (standardized scale).
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub b: Vec<f64>,
    pub rho: Vec<f64>,
    pub sigma2: f64,
}

/// Wall-clock time spent in each block of a chain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub setup: f64,
    pub b: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub mh_proposals: usize,
    pub mh_accepted: usize,
    pub newton_steps: usize,
    pub nonfinite_rejections: usize,
    pub hessian_modifications: usize,
    pub jittered_factorizations: usize,
    pub sigma2_floor_hits: usize,
}

impl ChainStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.mh_proposals == 0 {
            f64::NAN
        } else {
            self.mh_accepted as f64 / self.mh_proposals as f64
        }
    }
}

/// Retained draws of one chain, each stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub chain: usize,
    pub seed: u64,
    pub p: usize,
    pub num_coefs: usize,
    pub sigma2: Vec<f64>,
    /// `draws × p`.
    pub rho: Vec<f64>,
    /// `draws × D`.
    pub b: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
    pub stats: ChainStats,
    pub timings: Timings,
}

impl ChainOutput {
    pub fn num_draws(&self) -> usize {
        self.sigma2.len()
    }

    pub fn b_draw(&self, s: usize) -> &[f64] {
        &self.b[s * self.num_coefs..(s + 1) * self.num_coefs]
    }

    pub fn rho_draw(&self, s: usize) -> &[f64] {
        &self.rho[s * self.p..(s + 1) * self.p]
    }

    /// Trace of `ρ_j`.
    pub fn rho_trace(&self, j: usize) -> Vec<f64> {
        (0..self.num_draws()).map(|s| self.rho[s * self.p + j]).collect()
    }

    pub fn b_trace(&self, k: usize) -> Vec<f64> {
        (0..self.num_draws()).map(|s| self.b[s * self.num_coefs + k]).collect()
    }

    pub fn posterior_mean_b(&self) -> Vec<f64> {
        posterior_mean_b(std::slice::from_ref(self))
    }
}

/// Mean of `b` over all draws of all chains (standardized scale).
pub fn posterior_mean_b(chains: &[ChainOutput]) -> Vec<f64> {
    let d = chains.first().map_or(0, |c| c.num_coefs);
    let mut mean = vec![0.0; d];
    let mut count = 0usize;
    for c in chains {
        for s in 0..c.num_draws() {
            for (m, v) in mean.iter_mut().zip(c.b_draw(s)) {
                *m += v;
            }
            count += 1;
        }
    }
    for m in &mut mean {
        *m /= count.max(1) as f64;
    }
    mean
}

/// Sample mean and sd of `y`; the sd falls back to 1 when it is zero or
/// undefined.
pub fn standardization(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    if y.len() < 2 {
        return (mean, 1.0);
    }
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    (mean, if sd > 0.0 && sd.is_finite() { sd } else { 1.0 })
}

/// `σ² ~ IG(n/2, RSS/2)`, drawn as the reciprocal of a Gamma variate.
pub fn gibbs_sigma2<R: rand::Rng + ?Sized>(rss: f64, n: usize, rng: &mut R) -> Result<f64> {
    if !(rss.is_finite() && rss > 0.0) {
        return Err(Error::DegenerateFit(format!("residual sum of squares is {rss}")));
    }
    let g = Gamma::new(n as f64 / 2.0, 1.0)
        .map_err(|e| Error::NumericalBreakdown(format!("gamma draw: {e}")))?
        .sample(rng);
    Ok(rss / 2.0 / g)
}

/// Everything a chain needs that does not change across iterations.
pub struct Model<'a> {
    pub design: &'a TensorDesign,
    pub penalty: &'a PenaltyEigenstructure,
    pub prior: &'a SmoothingPrior,
}

impl Model<'_> {
    fn check(&self, y: &[f64], config: &SamplerConfig) -> Result<()> {
        let p = self.design.p();
        if y.len() != self.design.n() {
            return Err(Error::DimensionMismatch {
                expected: self.design.n(),
                got: y.len(),
                context: "response length",
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("response contains non-finite values".into()));
        }
        if self.penalty.dims() != self.design.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.design.num_coefs(),
                got: self.penalty.num_coefs(),
                context: "penalty and design shapes",
            });
        }
        self.prior.validate(p)?;
        config.validate(p)
    }
}

/// Runs one chain. `chain` selects an independent ChaCha stream of `seed`.
pub fn run_chain(model: &Model, y: &[f64], config: &SamplerConfig, chain: usize) -> Result<ChainOutput> {
    model.check(y, config)?;
    let start = Instant::now();
    let design = model.design;
    let (es, prior) = (model.penalty, model.prior);
    let (p, d, n) = (design.p(), design.num_coefs(), design.n());

    let (y_mean, y_scale) = standardization(y);
    let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();
    let bty = design.tmul(&ys);
    let mut system = PrecisionSystem::new(design, es)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain as u64);

    let mut state = ChainState {
        b: vec![0.0; d],
        rho: config.init_rho.clone().unwrap_or_else(|| vec![0.0; p]),
        sigma2: config.init_sigma2,
    };
    let keep = config.retained();
    let mut out = ChainOutput {
        chain,
        seed: config.seed,
        p,
        num_coefs: d,
        sigma2: Vec::with_capacity(keep),
        rho: Vec::with_capacity(keep * p),
        b: Vec::with_capacity(keep * d),
        y_mean,
        y_scale,
        stats: ChainStats::default(),
        timings: Timings::default(),
    };
    let (mut tb, mut ts, mut tr) = (Duration::ZERO, Duration::ZERO, Duration::ZERO);
    out.timings.setup = start.elapsed().as_secs_f64();

    for it in 0..config.iterations {
        let t0 = Instant::now();
        state.b = system.draw(&bty, state.sigma2, &state.rho, &mut rng)?;
        if system.last_jitter_level() > 0 {
            out.stats.jittered_factorizations += 1;
        }
        let qf = quadratic_forms(es, &state.b)?;
        let t1 = Instant::now();
        let rss = design.residual_sum_of_squares(&ys, &state.b);
        let s2 = gibbs_sigma2(rss, n, &mut rng)?;
        if s2 < SIGMA2_FLOOR {
            out.stats.sigma2_floor_hits += 1;
        }
        state.sigma2 = s2.max(SIGMA2_FLOOR);
        let t2 = Instant::now();
        let mv = if it < config.newton_steps {
            out.stats.newton_steps += 1;
            newton_step_rho(es, prior, &state.rho, &qf, config.delta)
        } else {
            out.stats.mh_proposals += 1;
            let mv = mh_rho(es, prior, &state.rho, &qf, config.delta, &mut rng);
            out.stats.mh_accepted += mv.accepted as usize;
            mv
        };
        out.stats.nonfinite_rejections += mv.nonfinite as usize;
        out.stats.hessian_modifications += mv.hessian_modified as usize;
        state.rho = mv.rho;
        let t3 = Instant::now();
        tb += t1 - t0;
        ts += t2 - t1;
        tr += t3 - t2;

        if it >= config.burn_in && (it - config.burn_in).is_multiple_of(config.thin) {
            out.sigma2.push(state.sigma2);
            out.rho.extend_from_slice(&state.rho);
            out.b.extend_from_slice(&state.b);
        }
    }
    out.timings.b = tb.as_secs_f64();
    out.timings.sigma2 = ts.as_secs_f64();
    out.timings.rho = tr.as_secs_f64();
    out.timings.total = start.elapsed().as_secs_f64();
    log::info!(
        "chain {chain}: {} iterations in {:.2}s, MH acceptance {:.3}",
        config.iterations,
        out.timings.total,
        out.stats.acceptance_rate()
    );
    Ok(out)
}

/// Runs `chains` independent chains in parallel; chain `c` uses stream `c`.
pub fn run_chains(model: &Model, y: &[f64], config: &SamplerConfig, chains: usize) -> Result<Vec<ChainOutput>> {
    if chains == 0 {
        return Err(Error::Config("at least one chain is required".into()));
    }
    (0..chains)
        .into_par_iter()
        .map(|c| run_chain(model, y, config, c))
        .collect()
}
