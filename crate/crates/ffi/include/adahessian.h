#ifndef ADAHESSIAN_H
#define ADAHESSIAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum AhStatus {
  AH_STATUS_OK = 0,
  AH_STATUS_NULL_POINTER = 1,
  AH_STATUS_INVALID_ARGUMENT = 2,
  AH_STATUS_DIMENSION_MISMATCH = 3,
  /**
   * A NaN or infinity was produced; outputs were left untouched.
   */
  AH_STATUS_NON_FINITE = 4,
  AH_STATUS_CONFIG = 5,
  AH_STATUS_IO = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  AH_STATUS_INTERNAL = 7,
} AhStatus;

/**
 * An AdaHessian optimizer with its moment buffers.
 */
typedef struct AhOptimizer AhOptimizer;

/**
 * A benchmark problem.
 */
typedef struct AhProblem AhProblem;

/**
 * AdaHessian hyperparameters.
 */
typedef struct AhHyper {
  double lr;
  double beta1;
  double beta2;
  /**
   * Hessian power in [0, 1].
   */
  double hessian_power;
  double eps;
  double weight_decay;
} AhHyper;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *ah_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ah_version(void);

/**
 * Default hyperparameters (lr 0.15, betas 0.9/0.999, power 1, eps 1e-8).
 */
struct AhHyper ah_hyper_default(void);

/**
 * Builds the registered problem `name` with default settings and data
 * seed `data_seed`.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AhStatus ah_problem_new(const char *name, uint64_t data_seed, struct AhProblem **out);

/**
 * Releases a problem. NULL is ignored.
 *
 * # Safety
 * `p` must come from [`ah_problem_new`] and not be used afterwards.
 */
void ah_problem_free(struct AhProblem *p);

/**
 * Number of parameters, or 0 for NULL.
 *
 * # Safety
 * `p` must be NULL or a live problem handle.
 */
size_t ah_problem_dim(const struct AhProblem *p);

/**
 * Writes the initial point for run seed `seed` into `out[0..len]`.
 *
 * # Safety
 * `p` must be a live handle and `out` must hold `len` doubles.
 */
enum AhStatus ah_problem_initial_point(const struct AhProblem *p,
                                       uint64_t seed,
                                       double *out,
                                       size_t len);

/**
 * Full-data loss at `theta`.
 *
 * # Safety
 * `theta` must hold `len` doubles and `loss` must be valid.
 */
enum AhStatus ah_problem_evaluate(const struct AhProblem *p,
                                  const double *theta,
                                  size_t len,
                                  double *loss);

/**
 * Full-data gradient at `theta` into `out`.
 *
 * # Safety
 * `theta` and `out` must each hold `len` doubles.
 */
enum AhStatus ah_problem_gradient(const struct AhProblem *p,
                                  const double *theta,
                                  size_t len,
                                  double *out);

/**
 * Exact Hessian-vector product `H(theta) z` into `out`.
 *
 * # Safety
 * `theta`, `z` and `out` must each hold `len` doubles.
 */
enum AhStatus ah_problem_hvp(const struct AhProblem *p,
                             const double *theta,
                             const double *z,
                             size_t len,
                             double *out);

/**
 * Hutchinson estimate of the Hessian diagonal at `theta` from `samples`
 * Rademacher probes. Probes depend only on `(seed, iteration)`.
 *
 * # Safety
 * `theta` and `out` must each hold `len` doubles.
 */
enum AhStatus ah_problem_estimate_diag(const struct AhProblem *p,
                                       const double *theta,
                                       size_t len,
                                       size_t samples,
                                       uint64_t seed,
                                       uint64_t iteration,
                                       double *out);

/**
 * Replaces each block of `block_size` consecutive entries by its mean.
 * `out` may alias `diag`.
 *
 * # Safety
 * `diag` and `out` must each hold `len` doubles.
 */
enum AhStatus ah_spatial_average(const double *diag, size_t len, size_t block_size, double *out);

/**
 * Creates an optimizer over parameter groups of the given sizes (one per
 * model tensor); spatial averaging never crosses a group boundary.
 *
 * # Safety
 * `hyper` must be valid, `groups` must hold `n_groups` sizes and `out`
 * must be valid.
 */
enum AhStatus ah_optimizer_new(const struct AhHyper *hyper,
                               const size_t *groups,
                               size_t n_groups,
                               size_t block_size,
                               struct AhOptimizer **out);

/**
 * Releases an optimizer. NULL is ignored.
 *
 * # Safety
 * `o` must come from [`ah_optimizer_new`] and not be used afterwards.
 */
void ah_optimizer_free(struct AhOptimizer *o);

/**
 * Completed steps, or 0 for NULL.
 *
 * # Safety
 * `o` must be NULL or a live optimizer handle.
 */
uint64_t ah_optimizer_iteration(const struct AhOptimizer *o);

/**
 * One AdaHessian step updating `theta` in place. `diag` is a fresh raw
 * Hessian diagonal estimate (spatially averaged here), or NULL to reuse
 * the previous one. The first step requires an estimate. On failure
 * `theta` is unchanged.
 *
 * # Safety
 * `theta`, `grad` and a non-NULL `diag` must each hold `len` doubles.
 */
enum AhStatus ah_optimizer_step(struct AhOptimizer *o,
                                double *theta,
                                const double *grad,
                                const double *diag,
                                size_t len,
                                double lr_scale);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADAHESSIAN_H */
