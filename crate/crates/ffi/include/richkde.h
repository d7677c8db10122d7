#ifndef RICHKDE_H
#define RICHKDE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum RkStatus {
  RK_STATUS_OK = 0,
  RK_STATUS_INVALID_ARGUMENT = 1,
  RK_STATUS_ILL_CONDITIONED = 2,
  RK_STATUS_SINGULAR_SYSTEM = 3,
  RK_STATUS_NO_FEASIBLE_WEIGHTS = 4,
  RK_STATUS_DOMAIN = 5,
  RK_STATUS_NUMERICAL_FAILURE = 6,
  RK_STATUS_NUMERICAL_OVERFLOW = 7,
  RK_STATUS_NULL_POINTER = 8,
  RK_STATUS_PANIC = 9,
} RkStatus;

// A fitted extrapolated estimator.
typedef struct RkEstimator RkEstimator;

// An owned sample of `n` points in `dim` dimensions.
typedef struct RkSample RkSample;

// Result of the optimal order rule.
typedef struct RkOrderSelection {
  double alpha;
  double r_real;
  size_t r;
  double h_star;
} RkOrderSelection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread. The pointer stays valid
// until the next failing call on the same thread.
const char *rk_last_error_message(void);

// Copies `n * dim` row-major values into a new sample.
//
// # Safety
// `data` must point to `n * dim` readable doubles; `out` must be writable.
enum RkStatus rk_sample_new(const double *data, size_t n, size_t dim, struct RkSample **out);

// # Safety
// `sample` must be null or a handle from `rk_sample_new` not yet freed.
void rk_sample_free(struct RkSample *sample);

// Plain Gaussian KDE with bandwidth `h` at the point `x` of length `dim`.
//
// # Safety
// Pointers must be valid for the given lengths.
enum RkStatus rk_kde_evaluate(const struct RkSample *sample,
                              double h,
                              const double *x,
                              size_t dim,
                              double *out);

// Builds an estimator from `r` bandwidths (any order) with Richardson
// weights. The sample is copied; the caller keeps ownership of `sample`.
//
// # Safety
// `bandwidths` must point to `r` doubles; `out` must be writable.
enum RkStatus rk_estimator_new(const struct RkSample *sample,
                               const double *bandwidths,
                               size_t r,
                               struct RkEstimator **out);

// Builds an estimator with the optimal order and bandwidths spread by the
// default ratio around the optimal bandwidth.
//
// # Safety
// `sample` must be a live handle; `out` must be writable.
enum RkStatus rk_estimator_new_auto(const struct RkSample *sample, struct RkEstimator **out);

// # Safety
// `est` must be null or a handle from `rk_estimator_new*` not yet freed.
void rk_estimator_free(struct RkEstimator *est);

// Number of bandwidths, or 0 for a null handle.
//
// # Safety
// `est` must be null or a live handle.
size_t rk_estimator_order(const struct RkEstimator *est);

// Copies the sorted bandwidths and their weights into arrays of length
// `len`, which must equal the order.
//
// # Safety
// Output pointers must be writable for `len` doubles.
enum RkStatus rk_estimator_weights(const struct RkEstimator *est,
                                   double *bandwidths_out,
                                   double *weights_out,
                                   size_t len);

// Estimate at one point of length `dim`.
//
// # Safety
// Pointers must be valid for the given lengths.
enum RkStatus rk_estimator_evaluate(const struct RkEstimator *est,
                                    const double *x,
                                    size_t dim,
                                    double *out);

// Estimates at `npoints` row-major points; writes `npoints` values.
//
// # Safety
// `points` must hold `npoints * dim` doubles and `out` `npoints` doubles.
enum RkStatus rk_estimator_evaluate_grid(const struct RkEstimator *est,
                                         const double *points,
                                         size_t npoints,
                                         size_t dim,
                                         double *out);

// Richardson weights for `r` bandwidths. `weights_out[i]` belongs to
// `bandwidths[i]` whatever the input order.
//
// # Safety
// Both pointers must be valid for `r` doubles.
enum RkStatus rk_lagrange_weights(const double *bandwidths, size_t r, double *weights_out);

// Optimal bandwidth for `n` points in `d` dimensions at order `r`.
//
// # Safety
// `out` must be writable.
enum RkStatus rk_optimal_bandwidth(uint64_t n, size_t d, size_t r, double *out);

// Optimal extrapolation order for `n` points in `d` dimensions.
//
// # Safety
// `out` must be writable.
enum RkStatus rk_optimal_order(uint64_t n, size_t d, struct RkOrderSelection *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RICHKDE_H */
