#ifndef HYPERCROWD_H
#define HYPERCROWD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HcStatus {
  HC_STATUS_OK = 0,
  HC_STATUS_NULL_POINTER = 1,
  HC_STATUS_INVALID_UTF8 = 2,
  HC_STATUS_CONFIG = 3,
  HC_STATUS_PROTOCOL = 4,
  HC_STATUS_INFEASIBLE = 5,
  HC_STATUS_OUT_OF_RANGE = 6,
  HC_STATUS_RUNTIME = 7,
  HC_STATUS_PANIC = 8,
} HcStatus;

/**
 * Opaque simulation handle.
 */
typedef struct HcSimulation HcSimulation;

/**
 * Metrics of one step. `perception_error` is NaN when the strategy keeps no perceptions.
 */
typedef struct HcStepMetrics {
  uint64_t t;
  double social_welfare;
  double mu_utility_mean;
  double completion_ratio;
  uint64_t collisions;
  double energy;
  double perception_error;
} HcStepMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length, 0 when there is none.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t hc_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hc_version(void);

/**
 * Create a simulation. `config_json` is layered over the named profile
 * (`"desk"` or `"paper"`, null means desk) and may itself be null.
 * `strategy` is one of copt, mgs, prism, pacmab, cmab, random.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum HcStatus hc_simulation_new(const char *profile,
                                const char *config_json,
                                const char *strategy,
                                uint64_t seed,
                                struct HcSimulation **out);

/**
 * # Safety
 * `sim` must come from [`hc_simulation_new`] and not be used afterwards.
 */
void hc_simulation_free(struct HcSimulation *sim);

/**
 * Advance `steps` steps, writing one record per step into `out` (which
 * may be null when the caller only wants to advance).
 *
 * # Safety
 * `sim` must be a live handle; `out` must be null or hold `steps` records.
 */
enum HcStatus hc_simulation_run(struct HcSimulation *sim, size_t steps, struct HcStepMetrics *out);

/**
 * Advance one step.
 *
 * # Safety
 * Same as [`hc_simulation_run`] with `steps = 1`.
 */
enum HcStatus hc_simulation_step(struct HcSimulation *sim, struct HcStepMetrics *out);

/**
 * Steps taken so far, or 0 for a null handle.
 *
 * # Safety
 * `sim` must be null or a live handle.
 */
uint64_t hc_simulation_time(const struct HcSimulation *sim);

/**
 * Number of MCSPs in the simulated market.
 *
 * # Safety
 * `sim` must be null or a live handle.
 */
size_t hc_simulation_mcsps(const struct HcSimulation *sim);

/**
 * Realized utility of MCSP `mcsp` in the last step.
 *
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum HcStatus hc_simulation_mcsp_utility(const struct HcSimulation *sim, size_t mcsp, double *out);

/**
 * Maximum-weight assignment on a row-major `rows x cols` matrix. NaN or
 * negative-infinite cells are forbidden. `out_cols[r]` receives the column
 * of row `r`, or -1 when the row is left out (more rows than columns).
 *
 * # Safety
 * `weights` must hold `rows * cols` values and `out_cols` `rows` slots;
 * `out_total` must be writable.
 */
enum HcStatus hc_solve_assignment(const double *weights,
                                  size_t rows,
                                  size_t cols,
                                  ptrdiff_t *out_cols,
                                  double *out_total);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYPERCROWD_H */
