#ifndef ROA_H
#define ROA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Solver outcome of one record.
 */
typedef enum RoaSolveStatus {
  /**
   * Assembly failed before the solver ran.
   */
  ROA_SOLVE_STATUS_NOT_SOLVED = 0,
  ROA_SOLVE_STATUS_OPTIMAL = 1,
  ROA_SOLVE_STATUS_NEAR_OPTIMAL = 2,
  ROA_SOLVE_STATUS_INFEASIBLE = 3,
  ROA_SOLVE_STATUS_UNBOUNDED = 4,
  ROA_SOLVE_STATUS_NUMERICAL_FAILURE = 5,
} RoaSolveStatus;

/**
 * Status codes of fallible calls.
 */
typedef enum RoaStatus {
  ROA_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  ROA_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  ROA_STATUS_INVALID_UTF8 = 2,
  /**
   * Problem or result text could not be parsed.
   */
  ROA_STATUS_PARSE = 3,
  /**
   * Arguments are inconsistent (dimensions, indices, degrees).
   */
  ROA_STATUS_INVALID_INPUT = 4,
  /**
   * The conic solver did not reach a usable solution.
   */
  ROA_STATUS_SOLVER = 5,
  /**
   * A certificate failed validation.
   */
  ROA_STATUS_VALIDATION = 6,
  ROA_STATUS_IO = 7,
  /**
   * The library panicked; the handle arguments should be discarded.
   */
  ROA_STATUS_PANIC = 8,
} RoaStatus;

/**
 * Opaque problem definition.
 */
typedef struct RoaProblem RoaProblem;

/**
 * Opaque result set.
 */
typedef struct RoaResult RoaResult;

/**
 * Summary of one result record. Absent values are NaN.
 */
typedef struct RoaRecordInfo {
  uint32_t deg_w;
  uint32_t deg_v;
  uint32_t k;
  enum RoaSolveStatus status;
  /**
   * Nonzero when the record carries `w` and `v`.
   */
  int32_t has_certificate;
  double d_star;
  double p_star;
  double vol_inner;
  double relative_error;
  double running_min_relative_error;
  double wall_time_s;
} RoaRecordInfo;

/**
 * Validation counts for one record.
 */
typedef struct RoaValidation {
  size_t samples;
  size_t violations;
  size_t uncertain;
  /**
   * Number of certificate sign checks that failed.
   */
  size_t failed_spot_checks;
} RoaValidation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next library call on the same thread.
 */
const char *roa_last_error(void);

/**
 * Library version (static string).
 */
const char *roa_version(void);

/**
 * Frees a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void roa_string_free(char *s);

/**
 * Parses a problem from TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` a valid pointer.
 */
enum RoaStatus roa_problem_parse(const char *toml, struct RoaProblem **out);

/**
 * Loads a problem file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum RoaStatus roa_problem_load(const char *path, struct RoaProblem **out);

/**
 * Number of state variables.
 *
 * # Safety
 * `problem` must be a live handle or null (returns 0).
 */
size_t roa_problem_dim(const struct RoaProblem *problem);

/**
 * # Safety
 * `problem` must be null or a handle not yet freed.
 */
void roa_problem_free(struct RoaProblem *problem);

/**
 * Solves the relaxations for `len` degree pairs, at most `jobs` at a time
 * (0: one per core). With `with_volume` nonzero, inner-set errors are
 * estimated with the problem's sampling plan. Failed solves become records
 * without certificates and make the call return `Solver`; `*out` is set
 * either way.
 *
 * # Safety
 * `deg_w` and `deg_v` must point to `len` values; `out` must be valid.
 */
enum RoaStatus roa_sweep(const struct RoaProblem *problem,
                         const uint32_t *deg_w,
                         const uint32_t *deg_v,
                         size_t len,
                         size_t jobs,
                         int32_t with_volume,
                         struct RoaResult **out);

/**
 * Solves one relaxation; see [`roa_sweep`].
 *
 * # Safety
 * As for [`roa_sweep`].
 */
enum RoaStatus roa_solve(const struct RoaProblem *problem,
                         uint32_t deg_w,
                         uint32_t deg_v,
                         int32_t with_volume,
                         struct RoaResult **out);

/**
 * Parses a result from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` a valid pointer.
 */
enum RoaStatus roa_result_parse(const char *json, struct RoaResult **out);

/**
 * Loads a result file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum RoaStatus roa_result_load(const char *path, struct RoaResult **out);

/**
 * Writes a result file.
 *
 * # Safety
 * `result` must be a live handle; `path` a NUL-terminated string.
 */
enum RoaStatus roa_result_save(const struct RoaResult *result, const char *path);

/**
 * The result as JSON (free with [`roa_string_free`]), or null.
 *
 * # Safety
 * `result` must be a live handle or null.
 */
char *roa_result_to_json(const struct RoaResult *result);

/**
 * # Safety
 * `result` must be null or a handle not yet freed.
 */
void roa_result_free(struct RoaResult *result);

/**
 * Number of records (0 for null).
 *
 * # Safety
 * `result` must be a live handle or null.
 */
size_t roa_result_len(const struct RoaResult *result);

/**
 * Number of state variables of the result's problem (0 for null).
 *
 * # Safety
 * `result` must be a live handle or null.
 */
size_t roa_result_dim(const struct RoaResult *result);

/**
 * # Safety
 * `result` must be a live handle; `out` a valid pointer.
 */
enum RoaStatus roa_result_record(const struct RoaResult *result,
                                 size_t index,
                                 struct RoaRecordInfo *out);

/**
 * Evaluates `w` of record `index` at `point` (`dim` entries).
 *
 * # Safety
 * `point` must hold `dim` values; `out` must be valid.
 */
enum RoaStatus roa_result_eval_w(const struct RoaResult *result,
                                 size_t index,
                                 const double *point,
                                 size_t dim,
                                 double *out);

/**
 * Evaluates `v(t, point)` of record `index`.
 *
 * # Safety
 * As for [`roa_result_eval_w`].
 */
enum RoaStatus roa_result_eval_v(const struct RoaResult *result,
                                 size_t index,
                                 double t,
                                 const double *point,
                                 size_t dim,
                                 double *out);

/**
 * Validates record `index` with `samples` Monte Carlo points: counts
 * in-set samples the oracle labels out-ROA and failed certificate checks.
 * Returns `Validation` when any are found (`*out` is still filled).
 *
 * # Safety
 * `result` must be a live handle; `out` a valid pointer.
 */
enum RoaStatus roa_validate(const struct RoaResult *result,
                            size_t index,
                            size_t samples,
                            uint64_t seed,
                            struct RoaValidation *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROA_H */
