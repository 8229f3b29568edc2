/* C interface to the congestion-game equilibrium oracle. */

#ifndef SNCG_H
#define SNCG_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
enum SncgStatus {
  SNCG_STATUS_OK = 0,
  SNCG_STATUS_NULL_POINTER = -1,
  SNCG_STATUS_INVALID_ARGUMENT = -2,
  SNCG_STATUS_PARSE_ERROR = -3,
  SNCG_STATUS_SOLVE_FAILED = -4,
};
typedef int32_t SncgStatus;

/**
 * Opaque equilibrium problem handle.
 */
typedef struct SncgProblem SncgProblem;

/**
 * Opaque solve-result handle.
 */
typedef struct SncgResult SncgResult;

/**
 * Creates the built-in two-population benchmark problem with unit masses.
 * The handle must be released with `sncg_problem_free`.
 */
SncgStatus sncg_problem_new_benchmark(SncgProblem **out);

/**
 * Creates a problem from a TOML network description (`nodes`, `edges`,
 * `populations` tables) and per-population masses.
 *
 * # Safety
 * `toml` must be a valid NUL-terminated string; `masses` must point to
 * `n_masses` doubles.
 */
SncgStatus sncg_problem_from_toml(const char *toml,
                                  const double *masses,
                                  uintptr_t n_masses,
                                  SncgProblem **out);

/**
 * Releases a problem handle. Null is ignored.
 *
 * # Safety
 * `problem` must be a handle from `sncg_problem_new_benchmark` or
 * `sncg_problem_from_toml`, not yet freed.
 */
void sncg_problem_free(SncgProblem *problem);

/**
 * Minimizes the potential to the requested gap tolerance. On success the
 * result handle must be released with `sncg_result_free`.
 *
 * # Safety
 * `problem` must be a live problem handle; `out` must be writable.
 */
SncgStatus sncg_solve(const SncgProblem *problem,
                      double tol,
                      uintptr_t max_iters,
                      SncgResult **out);

/**
 * Releases a result handle. Null is ignored.
 *
 * # Safety
 * `result` must be a handle from `sncg_solve`, not yet freed.
 */
void sncg_result_free(SncgResult *result);

/**
 * Number of populations in a solved problem.
 *
 * # Safety
 * `result` must be a live result handle.
 */
uintptr_t sncg_result_num_populations(const SncgResult *result);

/**
 * Number of paths of one population (0 if out of range).
 *
 * # Safety
 * `result` must be a live result handle.
 */
uintptr_t sncg_result_num_paths(const SncgResult *result, uintptr_t population);

/**
 * Equilibrium flow on one path.
 *
 * # Safety
 * `result` must be a live result handle; `out` must be writable.
 */
SncgStatus sncg_result_flow(const SncgResult *result,
                            uintptr_t population,
                            uintptr_t path,
                            double *out);

/**
 * Cost of one path at the equilibrium flows.
 *
 * # Safety
 * `result` must be a live result handle; `out` must be writable.
 */
SncgStatus sncg_result_cost(const SncgResult *result,
                            uintptr_t population,
                            uintptr_t path,
                            double *out);

/**
 * Residual unilateral-deviation gap of the solution.
 *
 * # Safety
 * `result` must be a live result handle.
 */
double sncg_result_epsilon_gap(const SncgResult *result);

/**
 * Potential value at the solution.
 *
 * # Safety
 * `result` must be a live result handle.
 */
double sncg_result_potential(const SncgResult *result);

/**
 * Certifies externally supplied flows: writes the maximum cost reduction
 * any agent can obtain by unilateral deviation. `flows` holds every
 * population's path flows concatenated in order; `path_counts` gives the
 * number of paths per population.
 *
 * # Safety
 * `problem` must be a live problem handle; `flows` must point to
 * sum(path_counts) doubles; `path_counts` to `n_populations` entries;
 * `out` must be writable.
 */
SncgStatus sncg_epsilon_gap(const SncgProblem *problem,
                            const double *flows,
                            const uintptr_t *path_counts,
                            uintptr_t n_populations,
                            double *out);

#endif  /* SNCG_H */
