#ifndef TENSOR_PSPLINE_H
#define TENSOR_PSPLINE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum TpsStatus {
  TPS_STATUS_OK = 0,
  TPS_STATUS_NULL_POINTER = 1,
  TPS_STATUS_INVALID_ARGUMENT = 2,
  TPS_STATUS_OUT_OF_DOMAIN = 3,
  TPS_STATUS_NUMERICAL_BREAKDOWN = 4,
  TPS_STATUS_INSUFFICIENT_SAMPLES = 5,
  TPS_STATUS_PANIC = 6,
} TpsStatus;

// Posterior draws of a finished fit.
typedef struct TpsFit TpsFit;

// Data, design, penalty and prior of one regression problem.
typedef struct TpsModel TpsModel;

// Sampler settings. Obtain defaults from [`tps_sampler_options_default`].
typedef struct TpsSamplerOptions {
  size_t iterations;
  size_t burn_in;
  size_t thin;
  size_t newton_steps;
  double delta;
  uint64_t seed;
  size_t chains;
} TpsSamplerOptions;

// Output buffers for credible bands over a grid, each of the grid's length.
typedef struct TpsBands {
  double *mean;
  double *pointwise_lo;
  double *pointwise_hi;
  double *simultaneous_lo;
  double *simultaneous_hi;
} TpsBands;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null if none. The
// pointer stays valid until the next failing call on the same thread.
const char *tps_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *tps_version(void);

// Builds a model from `n` points in `[0, 1]^p` (row-major `x`, length
// `n·p`), responses `y` (length `n`) and basis sizes `dims` (length `p`).
// The prior defaults to a Weibull prior with a shared rate from prior
// scaling (target function sd 1 on the standardized scale).
//
// # Safety
// Pointers must be valid for the stated lengths; `out` must be writable.
enum TpsStatus tps_model_new(const double *x,
                             size_t n,
                             size_t p,
                             const double *y,
                             const size_t *dims,
                             struct TpsModel **out);

// Releases a model; null is ignored.
//
// # Safety
// `model` must come from [`tps_model_new`] and not be used afterwards.
void tps_model_free(struct TpsModel *model);

// Uses a Weibull(½, `rate`) prior with the same rate for every coordinate.
//
// # Safety
// `model` must be a live handle.
enum TpsStatus tps_model_set_weibull_rate(struct TpsModel *model, double rate);

// Uses an IG(`alpha`, `beta`) prior on every smoothing variance.
//
// # Safety
// `model` must be a live handle.
enum TpsStatus tps_model_set_inverse_gamma(struct TpsModel *model, double alpha, double beta);

// Current shared Weibull rate, or an invalid-argument status for other priors.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum TpsStatus tps_model_weibull_rate(const struct TpsModel *model, double *out);

struct TpsSamplerOptions tps_sampler_options_default(void);

// Runs the sampler. `options` may be null for defaults.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum TpsStatus tps_fit(const struct TpsModel *model,
                       const struct TpsSamplerOptions *options,
                       struct TpsFit **out);

// Releases a fit; null is ignored.
//
// # Safety
// `fit` must come from [`tps_fit`] and not be used afterwards.
void tps_fit_free(struct TpsFit *fit);

// Number of coefficients `D` and retained draws (summed over chains).
//
// # Safety
// `fit` must be a live handle; outputs may be null when not wanted.
enum TpsStatus tps_fit_shape(const struct TpsFit *fit, size_t *num_coefs, size_t *num_draws);

// Metropolis–Hastings acceptance rate of the `ρ` updates over all chains.
//
// # Safety
// `fit` must be a live handle and `out` writable.
enum TpsStatus tps_fit_acceptance_rate(const struct TpsFit *fit, double *out);

// Posterior mean of the coefficients on the original response scale
// (`len` must equal `D`).
//
// # Safety
// `fit` must be a live handle; `out` writable for `len` values.
enum TpsStatus tps_fit_posterior_mean(const struct TpsFit *fit, double *out, size_t len);

// Posterior-mean function at `m` points in `[0, 1]^p` (row-major).
//
// # Safety
// `fit` must be a live handle; `x` readable for `m·p` values, `out` writable for `m`.
enum TpsStatus tps_fit_predict(const struct TpsFit *fit, const double *x, size_t m, double *out);

// Draws of `ρ = log τ²` (standardized scale) of one chain, `draws × p` row-major.
//
// # Safety
// `fit` must be a live handle; `out` writable for `len` values.
enum TpsStatus tps_fit_rho_draws(const struct TpsFit *fit, size_t chain, double *out, size_t len);

// Main effect of coordinate `j` (0-based) on `grid` (values in `[0, 1]`),
// with bands at `level`. Needs at least 100 retained draws.
//
// # Safety
// `fit` must be a live handle; `grid` readable and every band buffer
// writable for `grid_len` values.
enum TpsStatus tps_fit_main_effect(const struct TpsFit *fit,
                                   size_t j,
                                   const double *grid,
                                   size_t grid_len,
                                   double level,
                                   const struct TpsBands *bands);

// Closed-form `log Det K(e^ρ)` for basis sizes `dims` (length `p`).
//
// # Safety
// `dims` and `rho` readable for `p` values; `out` writable.
enum TpsStatus tps_log_pseudo_det(const size_t *dims, size_t p, const double *rho, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TENSOR_PSPLINE_H */
