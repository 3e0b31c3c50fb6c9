#ifndef RLCT_H
#define RLCT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum RlctStatus {
  RLCT_STATUS_OK = 0,
  RLCT_STATUS_NULL_POINTER = 1,
  RLCT_STATUS_CONFIG = 2,
  RLCT_STATUS_DOMAIN = 3,
  RLCT_STATUS_NUMERIC = 4,
  RLCT_STATUS_DATA = 5,
  RLCT_STATUS_IO = 6,
  RLCT_STATUS_PANIC = 7,
} RlctStatus;

/**
 * Retained log-likelihood draws of one tempered chain.
 */
typedef struct RlctChain RlctChain;

/**
 * A model from the built-in families.
 */
typedef struct RlctModel RlctModel;

/**
 * Sampler and replication settings for [`rlct_estimate_vm`].
 */
typedef struct RlctVmSettings {
  size_t n_s;
  size_t m;
  /**
   * Inverse temperature is `c / log n_s`.
   */
  double c;
  size_t n_iters;
  size_t burn_in;
  size_t thin;
  uint64_t seed;
  /**
   * 0 picks the default thread count.
   */
  size_t workers;
} RlctVmSettings;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *rlct_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rlct_version(void);

/**
 * Wraps `len` log-likelihood draws taken at inverse temperature `t`.
 *
 * # Safety
 * `draws` must point to `len` doubles and `out` to writable storage.
 */
enum RlctStatus rlct_chain_new(const double *draws, size_t len, double t, struct RlctChain **out);

/**
 * # Safety
 * `chain` must come from [`rlct_chain_new`] or be null.
 */
void rlct_chain_free(struct RlctChain *chain);

/**
 * `t^2` times the variance of the draws.
 *
 * # Safety
 * `chain` must be a live handle and `out` writable.
 */
enum RlctStatus rlct_lambda_v1(const struct RlctChain *chain, double *out);

/**
 * Variance of the draws; for a chain at `t = 1` this is half the
 * variance-based effective parameter count.
 *
 * # Safety
 * `chain` must be a live handle and `out` writable.
 */
enum RlctStatus rlct_p_v_half(const struct RlctChain *chain, double *out);

/**
 * Finite-difference estimate from one chain, the mean at `t + delta`
 * obtained by importance reweighting. `weight_ess` may be null.
 *
 * # Safety
 * `chain` must be a live handle and `out` writable.
 */
enum RlctStatus rlct_lambda_e_tilde(const struct RlctChain *chain,
                                    double delta,
                                    double *out,
                                    double *weight_ess);

/**
 * Builds a model by short name: `gmm2`, `normal_location`,
 * `binomial_mixture:<i>` or `rrr:<H>`.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` writable.
 */
enum RlctStatus rlct_model_new(const char *name, struct RlctModel **out);

/**
 * # Safety
 * `model` must come from [`rlct_model_new`] or be null.
 */
void rlct_model_free(struct RlctModel *model);

/**
 * Number of constrained parameters.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum RlctStatus rlct_model_dim(const struct RlctModel *model, size_t *out);

/**
 * Default settings: `n_s = 1000`, `m = 25`, `c = 1` and the default
 * sampler length.
 */
struct RlctVmSettings rlct_vm_settings_default(void);

/**
 * Mean over `m` simulated datasets of the single-dataset variance
 * estimate. `truth_params` may be null for the family's default truth.
 * `std_error` may be null.
 *
 * # Safety
 * Handles must be live, `truth_params` must hold `truth_len` doubles when
 * non-null, and `lambda` must be writable.
 */
enum RlctStatus rlct_estimate_vm(const struct RlctModel *fit,
                                 const struct RlctModel *truth,
                                 const double *truth_params,
                                 size_t truth_len,
                                 const struct RlctVmSettings *settings,
                                 double *lambda,
                                 double *std_error);

/**
 * Solves the singular-BIC equations for `k` models.
 *
 * `leq` is a row-major `k x k` byte matrix with `leq[a*k + b] != 0` when
 * model `a` is nested in model `b`. `lambda` is row-major with entry
 * `[i*k + j]` the learning coefficient of model `i` at a truth in model
 * `j`; only pairs with `j <= i` are read. `mult` has the same layout and
 * may be null for multiplicity one. Scores (log marginal likelihood
 * approximations) are written to `scores`.
 *
 * # Safety
 * Every non-null array must have the stated length.
 */
enum RlctStatus rlct_sbic_solve(size_t k,
                                const uint8_t *leq,
                                const double *priors,
                                size_t n,
                                const double *log_max_lik,
                                const double *lambda,
                                const uint32_t *mult,
                                double *scores);

/**
 * Posterior model probabilities from scores and prior weights.
 *
 * # Safety
 * `scores`, `priors` and `probs` must each hold `k` doubles.
 */
enum RlctStatus rlct_posterior_probs(size_t k,
                                     const double *scores,
                                     const double *priors,
                                     double *probs);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RLCT_H */
