#ifndef WIND_CLEARING_H
#define WIND_CLEARING_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WcMode {
  WC_MODE_CENTRAL = 0,
  WC_MODE_ADMM = 1,
} WcMode;

typedef enum WcStatus {
  WC_STATUS_OK = 0,
  WC_STATUS_NULL_POINTER = 1,
  WC_STATUS_INVALID_UTF8 = 2,
  WC_STATUS_IO = 3,
  WC_STATUS_PARSE = 4,
  WC_STATUS_INVALID = 5,
  WC_STATUS_SOLVER = 6,
  WC_STATUS_BUFFER_TOO_SMALL = 7,
  WC_STATUS_PANIC = 8,
} WcStatus;

typedef enum WcSolveStatus {
  WC_SOLVE_STATUS_OPTIMAL = 0,
  WC_SOLVE_STATUS_MAX_ITER = 1,
  WC_SOLVE_STATUS_INACCURATE = 2,
} WcSolveStatus;

/**
 * Which matrix of a solution to copy out.
 */
typedef enum WcField {
  /**
   * `[slot][generator]`, MW.
   */
  WC_FIELD_GENERATION = 0,
  /**
   * `[slot][farm]`, MW.
   */
  WC_FIELD_WIND = 1,
  /**
   * `[slot][aggregator]`, MW.
   */
  WC_FIELD_AGGREGATOR = 2,
  /**
   * `[slot][bus]`, $/MWh.
   */
  WC_FIELD_LMP = 3,
  /**
   * `[slot][aggregator]`, $/MWh.
   */
  WC_FIELD_LAMBDA = 4,
} WcField;

/**
 * Case, prices and forecast needed to clear.
 */
typedef struct WcMarket WcMarket;

typedef struct WcSolution WcSolution;

typedef struct WcClearOptions {
  enum WcMode mode;
  size_t n_samples;
  uint64_t seed;
  double beta;
  double mu;
  double rho;
  double eps_pri;
  size_t max_iter;
} WcClearOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *wc_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *wc_version(void);

struct WcClearOptions wc_clear_options_default(void);

/**
 * The bundled six-bus analog with PHEV users drawn from `seed`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum WcStatus wc_market_bundle(uint64_t seed, struct WcMarket **out);

/**
 * Loads case, price and forecast JSON files.
 *
 * # Safety
 * Paths must be NUL-terminated strings; `out` must be writable.
 */
enum WcStatus wc_market_load(const char *case_path,
                             const char *prices_path,
                             const char *forecast_path,
                             struct WcMarket **out);

/**
 * # Safety
 * `market` must come from a `wc_market_*` constructor or be null.
 */
void wc_market_free(struct WcMarket *market);

/**
 * Writes the number of case violations to `count`; `WC_STATUS_INVALID` when
 * non-zero, with the first violation as the error message.
 *
 * # Safety
 * `market` must be a live handle; `count` may be null.
 */
enum WcStatus wc_market_validate(const struct WcMarket *market, size_t *count);

/**
 * Draws `n_samples` scenarios from the market's forecast and clears.
 *
 * # Safety
 * `market` must be a live handle, `options` null or valid, `out` writable.
 */
enum WcStatus wc_clear(const struct WcMarket *market,
                       const struct WcClearOptions *options,
                       struct WcSolution **out);

/**
 * # Safety
 * `solution` must come from `wc_clear` or be null.
 */
void wc_solution_free(struct WcSolution *solution);

/**
 * Objective, generation cost and CVaR term; any output pointer may be null.
 *
 * # Safety
 * `solution` must be a live handle.
 */
enum WcStatus wc_solution_summary(const struct WcSolution *solution,
                                  double *objective,
                                  double *generation_cost,
                                  double *cvar_term,
                                  enum WcSolveStatus *status,
                                  size_t *iterations);

/**
 * Copies a matrix into `buf` (capacity `len` doubles). `rows` and `cols`
 * receive the shape even when the buffer is too small.
 *
 * # Safety
 * `solution` must be a live handle; `buf` must hold `len` doubles or be
 * null with `len == 0`.
 */
enum WcStatus wc_solution_copy(const struct WcSolution *solution,
                               enum WcField which,
                               double *buf,
                               size_t len,
                               size_t *rows,
                               size_t *cols);

/**
 * The full solution as JSON; free with `wc_string_free`.
 *
 * # Safety
 * `solution` must be a live handle; `out` writable.
 */
enum WcStatus wc_solution_json(const struct WcSolution *solution, char **out);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void wc_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WIND_CLEARING_H */
