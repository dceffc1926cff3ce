#ifndef CSGD_H
#define CSGD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum CsgdStatus {
  CSGD_STATUS_OK = 0,
  CSGD_STATUS_NULL_POINTER = 1,
  CSGD_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Topology could not be parsed or built, or the mixing bound failed.
   */
  CSGD_STATUS_GRAPH = 3,
  /**
   * Step-size conditions failed in the requested mode.
   */
  CSGD_STATUS_SCHEDULE = 4,
  CSGD_STATUS_PROBLEM = 5,
  /**
   * An iterate became non-finite.
   */
  CSGD_STATUS_DIVERGED = 6,
  CSGD_STATUS_BUFFER_TOO_SMALL = 7,
  CSGD_STATUS_PANIC = 8,
} CsgdStatus;

/**
 * Communication graph.
 */
typedef struct CsgdGraph CsgdGraph;

/**
 * Step-size schedule.
 */
typedef struct CsgdSchedule CsgdSchedule;

/**
 * Network of agents minimizing private quadratic objectives.
 */
typedef struct CsgdSimulation CsgdSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL terminated,
 * truncated to `len`). Returns the full message length excluding the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t csgd_last_error_message(char *buf, size_t len);

/**
 * Builds a graph from a topology string such as `ring:10` or `edges:n=4;0-1,1-2,2-3`.
 *
 * # Safety
 * `spec` must be a NUL-terminated string; `out` must be writable.
 */
enum CsgdStatus csgd_graph_new(const char *spec, struct CsgdGraph **out);

/**
 * # Safety
 * `graph` must be null or a handle from [`csgd_graph_new`] not yet freed.
 */
void csgd_graph_free(struct CsgdGraph *graph);

/**
 * Number of agents, or 0 for a null handle.
 *
 * # Safety
 * `graph` must be null or a live handle.
 */
size_t csgd_graph_agents(const struct CsgdGraph *graph);

/**
 * Writes the algebraic connectivity and the largest Laplacian eigenvalue.
 *
 * # Safety
 * `graph` must be a live handle; the output pointers must be writable.
 */
enum CsgdStatus csgd_graph_spectrum(const struct CsgdGraph *graph,
                                    double *lambda2,
                                    double *sigma_max);

/**
 * Checks `b * sigma_max(L) < 1`. In compat mode a violation only sets
 * `*satisfied = false`; in strict mode it also returns `CSGD_STATUS_GRAPH`.
 *
 * # Safety
 * `graph` must be a live handle; `satisfied` must be writable.
 */
enum CsgdStatus csgd_graph_check_mixing(const struct CsgdGraph *graph,
                                        double b,
                                        bool strict,
                                        bool *satisfied);

/**
 * Creates `alpha_k = a/(eps*k+1)^delta2`, `beta_k = b/(eps*k+1)^delta1`.
 *
 * # Safety
 * `out` must be writable.
 */
enum CsgdStatus csgd_schedule_new(double a,
                                  double b,
                                  double delta1,
                                  double delta2,
                                  double epsilon,
                                  struct CsgdSchedule **out);

/**
 * # Safety
 * `schedule` must be null or a handle from [`csgd_schedule_new`] not yet freed.
 */
void csgd_schedule_free(struct CsgdSchedule *schedule);

/**
 * Gradient step size at iteration `k`; NaN for a null handle.
 *
 * # Safety
 * `schedule` must be null or a live handle.
 */
double csgd_schedule_alpha(const struct CsgdSchedule *schedule, uint64_t k);

/**
 * Consensus step size at iteration `k`; NaN for a null handle.
 *
 * # Safety
 * `schedule` must be null or a live handle.
 */
double csgd_schedule_beta(const struct CsgdSchedule *schedule, uint64_t k);

/**
 * Checks the step-size conditions; boundary cases fail only in strict mode.
 *
 * # Safety
 * `schedule` must be a live handle.
 */
enum CsgdStatus csgd_schedule_validate(const struct CsgdSchedule *schedule, bool strict);

/**
 * Creates a simulation where agent `i` minimizes the average of
 * `0.5 * ||w - p||^2` over its `samples` points. `points` holds
 * `agents * samples * dim` values, agent-major. All agents start at `w0`
 * (`dim` values), or at zero when `w0` is null. The graph and schedule are
 * copied; the handles may be freed afterwards.
 *
 * # Safety
 * Handles must be live; `points` must hold the stated number of values and
 * `w0` must be null or hold `dim` values; `out` must be writable.
 */
enum CsgdStatus csgd_simulation_new_quadratic(const struct CsgdGraph *graph,
                                              const struct CsgdSchedule *schedule,
                                              const double *points,
                                              size_t samples,
                                              size_t dim,
                                              const double *w0,
                                              uint64_t seed,
                                              struct CsgdSimulation **out);

/**
 * # Safety
 * `sim` must be null or a handle from [`csgd_simulation_new_quadratic`] not yet freed.
 */
void csgd_simulation_free(struct CsgdSimulation *sim);

/**
 * Runs `steps` synchronous rounds.
 *
 * # Safety
 * `sim` must be a live handle not used concurrently from another thread.
 */
enum CsgdStatus csgd_simulation_step(struct CsgdSimulation *sim, uint64_t steps);

/**
 * Current iteration counter, or 0 for a null handle.
 *
 * # Safety
 * `sim` must be null or a live handle.
 */
uint64_t csgd_simulation_iteration(const struct CsgdSimulation *sim);

/**
 * Copies the stacked parameters (`agents * dim` values) into `buf`.
 * `*written` receives the required length even when `buf` is too small.
 *
 * # Safety
 * `sim` must be a live handle; `buf` must be null or hold `len` values;
 * `written` must be writable.
 */
enum CsgdStatus csgd_simulation_parameters(const struct CsgdSimulation *sim,
                                           double *buf,
                                           size_t len,
                                           size_t *written);

/**
 * Writes `sum_i ||w_i - mean(w)||^2` for the current state.
 *
 * # Safety
 * `sim` must be a live handle; `out` must be writable.
 */
enum CsgdStatus csgd_simulation_consensus_error(const struct CsgdSimulation *sim, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSGD_H */
