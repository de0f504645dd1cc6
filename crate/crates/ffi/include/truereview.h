#ifndef TRUEREVIEW_H
#define TRUEREVIEW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Accuracy map selector for [`TrIncentiveParams`].
 */
typedef enum TrAccuracyMap {
  TR_ACCURACY_MAP_SIGMOID = 0,
  TR_ACCURACY_MAP_LINEAR = 1,
} TrAccuracyMap;

/**
 * Result code of every fallible call.
 */
typedef enum TrStatus {
  TR_STATUS_OK = 0,
  TR_STATUS_NULL_POINTER = 1,
  TR_STATUS_INVALID_ARGUMENT = 2,
  TR_STATUS_INDEX_OUT_OF_RANGE = 3,
  /**
   * The requested bonus cannot be computed yet (no later ratings).
   */
  TR_STATUS_PENDING = 4,
  TR_STATUS_CONFIG = 5,
  TR_STATUS_IO = 6,
  TR_STATUS_PANIC = 7,
} TrStatus;

/**
 * Rating history of one paper.
 */
typedef struct TrHistory TrHistory;

/**
 * Result of one simulated repetition.
 */
typedef struct TrTrace TrTrace;

/**
 * Mechanism parameters passed by value.
 */
typedef struct TrIncentiveParams {
  double alpha;
  double max_grade;
  enum TrAccuracyMap accuracy_map;
} TrIncentiveParams;

/**
 * Components of one settled bonus.
 */
typedef struct TrBonusBreakdown {
  double informativeness;
  double accuracy_loss;
  double accuracy_factor;
  double bonus;
} TrBonusBreakdown;

/**
 * Posterior mean and standard deviation.
 */
typedef struct TrPosterior {
  double q_hat;
  double sigma_hat;
} TrPosterior;

/**
 * Monte Carlo estimate with its standard error.
 */
typedef struct TrEstimate {
  double estimate;
  double std_error;
} TrEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `cap`). Returns the full message length excluding the NUL,
 * or 0 when there is no error.
 *
 * # Safety
 * `buf` must be NULL or valid for `cap` bytes of writes.
 */
size_t tr_last_error_message(char *buf, size_t cap);

/**
 * Sigmoid parameters with the given `alpha` and maximum grade.
 */
struct TrIncentiveParams tr_incentive_params_sigmoid(double alpha, double max_grade);

/**
 * Squared difference `(a - b)²`.
 */
double tr_quadratic_loss(double a, double b);

/**
 * Accuracy factor `f(x)` for a loss `x` in `[0, M²]`.
 *
 * # Safety
 * `params` and `out` must be NULL or valid pointers.
 */
enum TrStatus tr_accuracy_factor(const struct TrIncentiveParams *params, double loss, double *out);

/**
 * Creates an empty history with default rating `default_rating`.
 * Writes NULL to `out` on failure.
 *
 * # Safety
 * `out` must be NULL or valid for writes.
 */
enum TrStatus tr_history_new(double default_rating, double max_grade, struct TrHistory **out);

/**
 * Releases a history. NULL is ignored.
 *
 * # Safety
 * `history` must be NULL or a pointer from [`tr_history_new`] not yet freed.
 */
void tr_history_free(struct TrHistory *history);

/**
 * Appends a rating by `reviewer` at `round`.
 *
 * # Safety
 * `history` must be NULL or a live history handle.
 */
enum TrStatus tr_history_push(struct TrHistory *history,
                              uint32_t reviewer,
                              double grade,
                              uint64_t round);

/**
 * Number of user ratings (the default rating is not counted).
 *
 * # Safety
 * `history` and `out` must be NULL or valid pointers.
 */
enum TrStatus tr_history_len(const struct TrHistory *history, size_t *out);

/**
 * Displayed rating: average of the default rating and every user rating.
 *
 * # Safety
 * `history` and `out` must be NULL or valid pointers.
 */
enum TrStatus tr_history_current_rating(const struct TrHistory *history, double *out);

/**
 * Bonus of the `index`-th user rating (1-based). Returns
 * [`TrStatus::Pending`] when no later rating exists.
 *
 * # Safety
 * `history`, `params` and `out` must be NULL or valid pointers.
 */
enum TrStatus tr_history_review_bonus(const struct TrHistory *history,
                                      size_t index,
                                      const struct TrIncentiveParams *params,
                                      struct TrBonusBreakdown *out);

/**
 * Conjugate-normal update of the prior `N(z, sigma)` with the mean
 * `observation` of `n >= 1` reviews of error `mean_error`.
 *
 * # Safety
 * `out` must be NULL or valid for writes.
 */
enum TrStatus tr_posterior_update(double z,
                                  double sigma,
                                  double observation,
                                  size_t n,
                                  double mean_error,
                                  struct TrPosterior *out);

/**
 * Closed-form `E[(x_n - x_{n+1})²]` when the `(n+1)`-th reviewer shifts by `delta`.
 */
double tr_analytic_deviation_loss(double variance, size_t n, double delta);

/**
 * Monte Carlo estimate of the deviation loss around `q_true`.
 *
 * # Safety
 * `out` must be NULL or valid for writes.
 */
enum TrStatus tr_simulate_deviation_loss(double variance,
                                         size_t n,
                                         double delta,
                                         uint64_t trials,
                                         uint64_t seed,
                                         double q_true,
                                         struct TrEstimate *out);

/**
 * Runs one repetition described by TOML `config` text (NULL means all
 * defaults), narrowed to `policy` (e.g. `"selfish:0.1"`) and `user_model`
 * (`"model1"` or `"model2"`). Both selectors may be NULL when the config
 * already names exactly one cell. Writes NULL to `out` on failure.
 *
 * # Safety
 * String arguments must be NULL or NUL-terminated; `out` must be NULL or
 * valid for writes.
 */
enum TrStatus tr_trace_run(const char *config,
                           const char *policy,
                           const char *user_model,
                           uint64_t seed,
                           struct TrTrace **out);

/**
 * Releases a trace. NULL is ignored.
 *
 * # Safety
 * `trace` must be NULL or a pointer from [`tr_trace_run`] not yet freed.
 */
void tr_trace_free(struct TrTrace *trace);

/**
 * Number of users in the traced population.
 *
 * # Safety
 * `trace` and `out` must be NULL or valid pointers.
 */
enum TrStatus tr_trace_num_users(const struct TrTrace *trace, size_t *out);

/**
 * Number of recorded snapshots.
 *
 * # Safety
 * `trace` and `out` must be NULL or valid pointers.
 */
enum TrStatus tr_trace_snapshot_count(const struct TrTrace *trace, size_t *out);

/**
 * Round and global loss of snapshot `index` (0-based).
 *
 * # Safety
 * `trace`, `round` and `global_loss` must be NULL or valid pointers.
 */
enum TrStatus tr_trace_snapshot(const struct TrTrace *trace,
                                size_t index,
                                uint64_t *round,
                                double *global_loss);

/**
 * Copies the reputations of snapshot `index` into `buf`, which must hold
 * `len` values with `len` equal to the number of users.
 *
 * # Safety
 * `trace` must be NULL or a live handle; `buf` must be NULL or valid for
 * `len` writes.
 */
enum TrStatus tr_trace_reputations(const struct TrTrace *trace,
                                   size_t index,
                                   double *buf,
                                   size_t len);

/**
 * Copies each user's typical error σ^t into `buf` of `len` values.
 *
 * # Safety
 * `trace` must be NULL or a live handle; `buf` must be NULL or valid for
 * `len` writes.
 */
enum TrStatus tr_trace_typical_errors(const struct TrTrace *trace, double *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRUEREVIEW_H */
