//! C ABI for tensor-pspline.
//!
//! Handles are opaque pointers created by `tps_*_new`/`tps_fit` and released
//! with the matching `tps_*_free`. Every fallible function returns a
//! [`TpsStatus`]; on failure a description is available from
//! [`tps_last_error_message`] on the same thread. Coordinates passed in must
//! already lie in the unit cube; responses and results are on the caller's
//! original response scale.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use tensor_pspline::basis::{design_row, MarginalBasis, TensorDesign};
use tensor_pspline::effects::{compute_effect, EffectTerm};
use tensor_pspline::penalty::{log_pseudo_det, PenaltyEigenstructure};
use tensor_pspline::priors::{prior_scaling, ScalingOptions, SmoothingPrior};
use tensor_pspline::sampler::{check_problem_size, posterior_mean_b, run_chains, ChainOutput, Model, SamplerConfig};
use tensor_pspline::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TpsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfDomain = 3,
    NumericalBreakdown = 4,
    InsufficientSamples = 5,
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TpsStatus {
    match e {
        Error::OutOfDomain { .. } => TpsStatus::OutOfDomain,
        Error::NumericalBreakdown(_) | Error::DegenerateFit(_) | Error::Scaling(_) => TpsStatus::NumericalBreakdown,
        Error::InsufficientSamples { .. } => TpsStatus::InsufficientSamples,
        _ => TpsStatus::InvalidArgument,
    }
}

struct Failure(TpsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(TpsStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(TpsStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status plus last-error message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TpsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TpsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            TpsStatus::Panic
        }
    }
}

unsafe fn slice_in<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

/// Message of the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tps_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Data, design, penalty and prior of one regression problem.
pub struct TpsModel {
    design: TensorDesign,
    penalty: PenaltyEigenstructure,
    prior: SmoothingPrior,
    y: Vec<f64>,
}

/// Posterior draws of a finished fit.
pub struct TpsFit {
    bases: Vec<MarginalBasis>,
    chains: Vec<ChainOutput>,
}

impl TpsFit {
    fn draws_original(&self) -> Vec<f64> {
        self.chains
            .iter()
            .flat_map(|c| c.b.iter().map(move |b| c.y_mean + c.y_scale * b))
            .collect()
    }
}

/// Builds a model from `n` points in `[0, 1]^p` (row-major `x`, length
/// `n·p`), responses `y` (length `n`) and basis sizes `dims` (length `p`).
/// The prior defaults to a Weibull prior with a shared rate from prior
/// scaling (target function sd 1 on the standardized scale).
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tps_model_new(
    x: *const f64,
    n: usize,
    p: usize,
    y: *const f64,
    dims: *const usize,
    out: *mut *mut TpsModel,
) -> TpsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if n == 0 || p == 0 {
            return Err(invalid("n and p must be positive"));
        }
        let x = slice_in(x, n * p, "x")?;
        let y = slice_in(y, n, "y")?;
        let dims = slice_in(dims, p, "dims")?;
        check_problem_size(dims)?;
        let bases = dims.iter().map(|&d| MarginalBasis::new(d)).collect::<Result<Vec<_>, _>>()?;
        let design = TensorDesign::new(bases, x)?;
        let penalty = PenaltyEigenstructure::for_dims(dims)?;
        let rate = prior_scaling(&design, &penalty, &ScalingOptions::default())?;
        let model = TpsModel {
            prior: SmoothingPrior::weibull(p, rate),
            design,
            penalty,
            y: y.to_vec(),
        };
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from [`tps_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tps_model_free(model: *mut TpsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

unsafe fn model_mut<'a>(model: *mut TpsModel) -> Result<&'a mut TpsModel, Failure> {
    model.as_mut().ok_or_else(|| null("model"))
}

/// Uses a Weibull(½, `rate`) prior with the same rate for every coordinate.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tps_model_set_weibull_rate(model: *mut TpsModel, rate: f64) -> TpsStatus {
    guard(|| {
        let m = model_mut(model)?;
        let prior = SmoothingPrior::weibull(m.design.p(), rate);
        prior.validate(m.design.p())?;
        m.prior = prior;
        Ok(())
    })
}

/// Uses an IG(`alpha`, `beta`) prior on every smoothing variance.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tps_model_set_inverse_gamma(model: *mut TpsModel, alpha: f64, beta: f64) -> TpsStatus {
    guard(|| {
        let m = model_mut(model)?;
        let prior = SmoothingPrior::inverse_gamma(m.design.p(), alpha, beta);
        prior.validate(m.design.p())?;
        m.prior = prior;
        Ok(())
    })
}

/// Current shared Weibull rate, or an invalid-argument status for other priors.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tps_model_weibull_rate(model: *const TpsModel, out: *mut f64) -> TpsStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        match &m.prior {
            SmoothingPrior::Weibull { rate } => {
                *out = rate[0];
                Ok(())
            }
            _ => Err(invalid("model prior is not Weibull")),
        }
    })
}

/// Sampler settings. Obtain defaults from [`tps_sampler_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TpsSamplerOptions {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub newton_steps: usize,
    pub delta: f64,
    pub seed: u64,
    pub chains: usize,
}

#[no_mangle]
pub extern "C" fn tps_sampler_options_default() -> TpsSamplerOptions {
    let c = SamplerConfig::default();
    TpsSamplerOptions {
        iterations: c.iterations,
        burn_in: c.burn_in,
        thin: c.thin,
        newton_steps: c.newton_steps,
        delta: c.delta,
        seed: c.seed,
        chains: 1,
    }
}

/// Runs the sampler. `options` may be null for defaults.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tps_fit(
    model: *const TpsModel,
    options: *const TpsSamplerOptions,
    out: *mut *mut TpsFit,
) -> TpsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let o = options.as_ref().copied().unwrap_or_else(|| tps_sampler_options_default());
        let cfg = SamplerConfig {
            iterations: o.iterations,
            burn_in: o.burn_in,
            thin: o.thin,
            delta: o.delta,
            newton_steps: o.newton_steps,
            seed: o.seed,
            ..Default::default()
        };
        let model = Model {
            design: &m.design,
            penalty: &m.penalty,
            prior: &m.prior,
        };
        let chains = run_chains(&model, &m.y, &cfg, o.chains)?;
        *out = Box::into_raw(Box::new(TpsFit {
            bases: m.design.bases().to_vec(),
            chains,
        }));
        Ok(())
    })
}

/// Releases a fit; null is ignored.
///
/// # Safety
/// `fit` must come from [`tps_fit`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tps_fit_free(fit: *mut TpsFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

unsafe fn fit_ref<'a>(fit: *const TpsFit) -> Result<&'a TpsFit, Failure> {
    fit.as_ref().ok_or_else(|| null("fit"))
}

/// Number of coefficients `D` and retained draws (summed over chains).
///
/// # Safety
/// `fit` must be a live handle; outputs may be null when not wanted.
#[no_mangle]
pub unsafe extern "C" fn tps_fit_shape(fit: *const TpsFit, num_coefs: *mut usize, num_draws: *mut usize) -> TpsStatus {
    guard(|| {
        let f = fit_ref(fit)?;
        if let Some(d) = num_coefs.as_mut() {
            *d = f.chains[0].num_coefs;
        }
        if let Some(s) = num_draws.as_mut() {
            *s = f.chains.iter().map(ChainOutput::num_draws).sum();
        }
        Ok(())
    })
}

/// Metropolis–Hastings acceptance rate of the `ρ` updates over all chains.
///
/// # Safety
/// `fit` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tps_fit_acceptance_rate(fit: *const TpsFit, out: *mut f64) -> TpsStatus {
    guard(|| {
        let f = fit_ref(fit)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let (a, p) = f
            .chains
            .iter()
            .fold((0, 0), |(a, p), c| (a + c.stats.mh_accepted, p + c.stats.mh_proposals));
        *out = if p == 0 { f64::NAN } else { a as f64 / p as f64 };
        Ok(())
    })
}

/// Posterior mean of the coefficients on the original response scale
/// (`len` must equal `D`).
///
/// # Safety
/// `fit` must be a live handle; `out` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn tps_fit_posterior_mean(fit: *const TpsFit, out: *mut f64, len: usize) -> TpsStatus {
    guard(|| {
        let f = fit_ref(fit)?;
        let d = f.chains[0].num_coefs;
        if len != d {
            return Err(invalid(format!("output length {len}, expected {d}")));
        }
        let out = slice_out(out, len, "out")?;
        let c0 = &f.chains[0];
        for (o, b) in out.iter_mut().zip(posterior_mean_b(&f.chains)) {
            *o = c0.y_mean + c0.y_scale * b;
        }
        Ok(())
    })
}

/// Posterior-mean function at `m` points in `[0, 1]^p` (row-major).
///
/// # Safety
/// `fit` must be a live handle; `x` readable for `m·p` values, `out` writable for `m`.
#[no_mangle]
pub unsafe extern "C" fn tps_fit_predict(fit: *const TpsFit, x: *const f64, m: usize, out: *mut f64) -> TpsStatus {
    guard(|| {
        let f = fit_ref(fit)?;
        let p = f.bases.len();
        let x = slice_in(x, m * p, "x")?;
        let out = slice_out(out, m, "out")?;
        let c0 = &f.chains[0];
        let mean: Vec<f64> = posterior_mean_b(&f.chains)
            .into_iter()
            .map(|b| c0.y_mean + c0.y_scale * b)
            .collect();
        for (o, xi) in out.iter_mut().zip(x.chunks(p)) {
            *o = design_row(&f.bases, xi)?.dot(&mean);
        }
        Ok(())
    })
}

/// Draws of `ρ = log τ²` (standardized scale) of one chain, `draws × p` row-major.
///
/// # Safety
/// `fit` must be a live handle; `out` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn tps_fit_rho_draws(fit: *const TpsFit, chain: usize, out: *mut f64, len: usize) -> TpsStatus {
    guard(|| {
        let f = fit_ref(fit)?;
        let c = f
            .chains
            .get(chain)
            .ok_or_else(|| invalid(format!("chain {chain} out of range ({} chains)", f.chains.len())))?;
        if len != c.rho.len() {
            return Err(invalid(format!("output length {len}, expected {}", c.rho.len())));
        }
        slice_out(out, len, "out")?.copy_from_slice(&c.rho);
        Ok(())
    })
}

/// Output buffers for credible bands over a grid, each of the grid's length.
#[repr(C)]
pub struct TpsBands {
    pub mean: *mut f64,
    pub pointwise_lo: *mut f64,
    pub pointwise_hi: *mut f64,
    pub simultaneous_lo: *mut f64,
    pub simultaneous_hi: *mut f64,
}

/// Main effect of coordinate `j` (0-based) on `grid` (values in `[0, 1]`),
/// with bands at `level`. Needs at least 100 retained draws.
///
/// # Safety
/// `fit` must be a live handle; `grid` readable and every band buffer
/// writable for `grid_len` values.
#[no_mangle]
pub unsafe extern "C" fn tps_fit_main_effect(
    fit: *const TpsFit,
    j: usize,
    grid: *const f64,
    grid_len: usize,
    level: f64,
    bands: *const TpsBands,
) -> TpsStatus {
    guard(|| {
        let f = fit_ref(fit)?;
        let grid = slice_in(grid, grid_len, "grid")?;
        if grid.is_empty() {
            return Err(invalid("grid is empty"));
        }
        let b = bands.as_ref().ok_or_else(|| null("bands"))?;
        let eff = compute_effect(
            &f.draws_original(),
            &f.bases,
            EffectTerm::Main { j },
            vec![grid.to_vec()],
            level,
            false,
        )?;
        let r = &eff.bands;
        for (dst, src, name) in [
            (b.mean, &r.mean, "bands.mean"),
            (b.pointwise_lo, &r.pointwise_lo, "bands.pointwise_lo"),
            (b.pointwise_hi, &r.pointwise_hi, "bands.pointwise_hi"),
            (b.simultaneous_lo, &r.simultaneous_lo, "bands.simultaneous_lo"),
            (b.simultaneous_hi, &r.simultaneous_hi, "bands.simultaneous_hi"),
        ] {
            slice_out(dst, grid_len, name)?.copy_from_slice(src);
        }
        Ok(())
    })
}

/// Closed-form `log Det K(e^ρ)` for basis sizes `dims` (length `p`).
///
/// # Safety
/// `dims` and `rho` readable for `p` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tps_log_pseudo_det(dims: *const usize, p: usize, rho: *const f64, out: *mut f64) -> TpsStatus {
    guard(|| {
        if p == 0 {
            return Err(invalid("p must be positive"));
        }
        let dims = slice_in(dims, p, "dims")?;
        let rho = slice_in(rho, p, "rho")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let es = PenaltyEigenstructure::for_dims(dims)?;
        *out = log_pseudo_det(&es, rho);
        Ok(())
    })
}
