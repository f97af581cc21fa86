//! Fully Bayesian anisotropic smoothing with tensor-product P-splines.
//!
//! The model is `y = B b + ε`, `ε ~ N(0, σ² I)`, with a partially improper
//! Gaussian prior on the tensor-product B-spline coefficients whose precision
//! is the Kronecker sum `K(τ²) = Σ_j K_j / τ_j²`. The sampler combines Gibbs
//! draws of `b` and `σ²` with Taylored Metropolis–Hastings updates of the
//! log-smoothing variances `ρ = log τ²`, which are cheap because the
//! log-pseudo-determinant of `K(e^ρ)` and its derivatives have closed forms
//! in the marginal penalty eigenvalues.
//!
//! Module map:
//! - [`basis`]: marginal cubic B-splines, tensor design rows, `BᵀB`.
//! - [`penalty`]: difference penalties, eigenstructure, log-pseudo-determinant,
//!   quadratic forms and the `ρ` gradient/Hessian.
//! - [`priors`]: Inverse Gamma and Weibull smoothing-variance priors.
//! - [`sampler`]: Gibbs/MH engine and chain orchestration.
//! - [`effects`]: main effects, two-way interactions and credible bands.
//! - [`diagnostics`]: summaries, rank-normalized split-R̂, bulk/tail ESS.
//! - [`cli`]: data ingestion, configuration, artifacts and the simulation harness.

// Index loops mirror the matrix algebra; `!(a < b)` rejects NaN on purpose.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod cli;
pub mod diagnostics;
pub mod effects;
pub mod error;
pub mod penalty;
pub mod priors;
pub mod sampler;
pub mod tensor;

pub use error::{Error, Result};
