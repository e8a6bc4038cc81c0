#ifndef EBARX_H
#define EBARX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes. 2 to 6 carry the same meaning as the CLI exit codes.
typedef enum EbarxStatus {
  EBARX_STATUS_OK = 0,
  EBARX_STATUS_INVALID_ARGUMENT = 2,
  EBARX_STATUS_UNSTABLE = 3,
  EBARX_STATUS_ESTIMATION = 4,
  EBARX_STATUS_FILE = 5,
  EBARX_STATUS_SCENARIO = 6,
  EBARX_STATUS_NULL_POINTER = 7,
  EBARX_STATUS_BUFFER_TOO_SMALL = 8,
  EBARX_STATUS_PANIC = 9,
} EbarxStatus;

typedef struct EbarxComparison EbarxComparison;

typedef struct EbarxDataset EbarxDataset;

typedef struct EbarxTrace EbarxTrace;

// One aggregate row of a comparison: a (λ, π, N) cell.
typedef struct EbarxAggregateRow {
  double lambda;
  double pi_scale;
  size_t n;
  size_t replicates;
  size_t failed;
  double marg_mse_median;
  double marg_mse_iqr;
  double eb_mse_median;
  double eb_mse_iqr;
  double eb_mse_averaged;
  double clip_rate;
} EbarxAggregateRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next `ebarx_*` call on the same thread.
const char *ebarx_last_error(void);

const char *ebarx_version(void);

// Simulates `samples` points of an ARX model after `burn_in` discarded
// ones. `b` may be null when `m` is 0; the input is unit white noise.
//
// # Safety
// `a` must point to `n` doubles, `b` to `m` doubles, `out` must be writable.
enum EbarxStatus ebarx_dataset_simulate(const double *a,
                                        size_t n,
                                        const double *b,
                                        size_t m,
                                        double sigma2,
                                        size_t samples,
                                        size_t burn_in,
                                        uint64_t seed,
                                        struct EbarxDataset **out);

// Wraps a recorded series with a zero presample of length `lags`. `u` may be
// null for a pure output series.
//
// # Safety
// `y` and (if non-null) `u` must point to `len` doubles.
enum EbarxStatus ebarx_dataset_from_series(const double *y,
                                           const double *u,
                                           size_t len,
                                           size_t lags,
                                           struct EbarxDataset **out);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum EbarxStatus ebarx_dataset_load(const char *path, struct EbarxDataset **out);

// # Safety
// `d` must be a live dataset handle and `path` a NUL-terminated string.
enum EbarxStatus ebarx_dataset_save(const struct EbarxDataset *d, const char *path);

// Number of samples, 0 for a null handle.
//
// # Safety
// `d` must be null or a live dataset handle.
size_t ebarx_dataset_len(const struct EbarxDataset *d);

// Copies the output series into `buf`.
//
// # Safety
// `d` must be a live dataset handle and `buf` must hold `cap` doubles.
enum EbarxStatus ebarx_dataset_output(const struct EbarxDataset *d, double *buf, size_t cap);

// # Safety
// `d` must be null or a handle not yet freed.
void ebarx_dataset_free(struct EbarxDataset *d);

// Least squares fit of an ARX(n, m) model. `variance` and `sigma2` may be
// null.
//
// # Safety
// `estimate` must hold `n+m` doubles and `variance` `(n+m)^2`.
enum EbarxStatus ebarx_least_squares(const struct EbarxDataset *d,
                                     size_t n,
                                     size_t m,
                                     double *estimate,
                                     double *variance,
                                     double *sigma2);

// Marginal (fixed-effects) estimate under the prior `(0, sigma2, pi)`.
//
// # Safety
// `pi` must hold `(n+m)^2` doubles; output buffers as for
// [`ebarx_least_squares`].
enum EbarxStatus ebarx_marginal_estimate(const struct EbarxDataset *d,
                                         size_t n,
                                         size_t m,
                                         double sigma2,
                                         const double *pi,
                                         double *estimate,
                                         double *variance);

// Posterior mean and covariance under the prior `(mu, sigma2, pi)`; a null
// `mu` means zero.
//
// # Safety
// `mu` holds `n+m` doubles, `pi` `(n+m)^2`; output buffers as for
// [`ebarx_least_squares`].
enum EbarxStatus ebarx_bayes_posterior(const struct EbarxDataset *d,
                                       size_t n,
                                       size_t m,
                                       const double *mu,
                                       double sigma2,
                                       const double *pi,
                                       double *estimate,
                                       double *variance);

// Scalar MSE of both estimators against the true parameter `theta0`.
//
// # Safety
// `theta0` and `mu` hold `n+m` doubles, `pi` `(n+m)^2`, and both outputs
// must be writable.
enum EbarxStatus ebarx_mse(const struct EbarxDataset *d,
                           size_t n,
                           size_t m,
                           const double *mu,
                           double sigma2,
                           const double *pi,
                           const double *theta0,
                           double *marg_out,
                           double *eb_out);

// Scalar-model squared error of the EB and marginal estimators over a grid of prior
// variances.
//
// # Safety
// `pi`, `e2_eb` and `e2_m` must each hold `len` doubles.
enum EbarxStatus ebarx_scalar_curves(double theta0,
                                     double delta_sq,
                                     const double *pi,
                                     size_t len,
                                     double *e2_eb,
                                     double *e2_m);

// Runs the forward filter from the prior `(mu, sigma2, pi)`.
//
// # Safety
// Arguments as for [`ebarx_bayes_posterior`]; `out` must be writable.
enum EbarxStatus ebarx_run_forward(const struct EbarxDataset *d,
                                   size_t n,
                                   size_t m,
                                   const double *mu,
                                   double sigma2,
                                   const double *pi,
                                   struct EbarxTrace **out);

// Runs the backward filter of an AR(n) model. A null `terminal_p` starts
// diffuse; a null `terminal_mean` starts at zero. `sigma2_ref` is the noise
// variance the terminal covariance is normalized by.
//
// # Safety
// `terminal_mean` holds `n` doubles and `terminal_p` `n*n`; `out` must be
// writable.
enum EbarxStatus ebarx_run_backward(const struct EbarxDataset *d,
                                    size_t n,
                                    const double *terminal_mean,
                                    const double *terminal_p,
                                    double sigma2_ref,
                                    struct EbarxTrace **out);

// Number of processed rows; the trace holds one more state than this.
//
// # Safety
// `t` must be null or a live trace handle.
size_t ebarx_trace_steps(const struct EbarxTrace *t);

// # Safety
// `t` must be null or a live trace handle.
size_t ebarx_trace_dim(const struct EbarxTrace *t);

// State `k` (0 is the initial condition). `p_norm` and `sigma2_hat` may be
// null.
//
// # Safety
// `xhat` holds `dim` doubles and `p_norm` `dim^2`.
enum EbarxStatus ebarx_trace_state(const struct EbarxTrace *t,
                                   size_t k,
                                   double *xhat,
                                   double *p_norm,
                                   double *sigma2_hat);

// # Safety
// `t` must be a live trace handle and `path` a NUL-terminated string.
enum EbarxStatus ebarx_trace_save_csv(const struct EbarxTrace *t, const char *path);

// Recovers the normalized prior variance from the final state of a backward
// trace. Multiply by that state's `sigma2_hat` for the unnormalized prior.
// `clipped` and `ill_conditioned` may be null.
//
// # Safety
// `pi` holds `dim^2` doubles.
enum EbarxStatus ebarx_recover_prior(const struct EbarxTrace *t,
                                     double *pi,
                                     int *clipped,
                                     int *ill_conditioned);

// # Safety
// `t` must be null or a handle not yet freed.
void ebarx_trace_free(struct EbarxTrace *t);

// Runs a Monte-Carlo comparison described by `[compare]` config text (the
// CLI config format; other sections are parsed and ignored). Fails with
// `Scenario` when every replicate of some scenario failed; the handle is
// still produced in that case.
//
// # Safety
// `config` must be a NUL-terminated string and `out` writable.
enum EbarxStatus ebarx_compare_run(const char *config, struct EbarxComparison **out);

// Number of aggregate rows, ordered by λ, then π, then N.
//
// # Safety
// `c` must be null or a live comparison handle.
size_t ebarx_comparison_len(const struct EbarxComparison *c);

// # Safety
// `c` must be a live comparison handle and `out` writable.
enum EbarxStatus ebarx_comparison_row(const struct EbarxComparison *c,
                                      size_t k,
                                      struct EbarxAggregateRow *out);

// Writes `table_lambda{λ}.csv` and `aggregate_lambda{λ}.csv` into `dir`,
// the same files as `ebarx compare`.
//
// # Safety
// `c` must be a live comparison handle and `dir` a NUL-terminated string.
enum EbarxStatus ebarx_comparison_save(const struct EbarxComparison *c, const char *dir);

// # Safety
// `c` must be null or a handle not yet freed.
void ebarx_comparison_free(struct EbarxComparison *c);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EBARX_H */
