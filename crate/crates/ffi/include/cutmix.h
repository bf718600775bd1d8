#ifndef CUTMIX_H
#define CUTMIX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of every API call.
 */
typedef enum {
  CM_OK = 0,
  CM_CONFIG_ERROR = 1,
  CM_GEOMETRY_ERROR = 2,
  CM_ASSEMBLY_ERROR = 3,
  CM_SOLVER_ERROR = 4,
  CM_IO_ERROR = 5,
  CM_INVALID_ARGUMENT = 6,
  CM_INTERNAL_ERROR = 7,
} CmStatus;

/**
 * Opaque scenario handle.
 */
typedef struct CmScenario CmScenario;

/**
 * Headline numbers of one completed run.
 */
typedef struct {
  /**
   * Free, active degrees of freedom of the reduced system.
   */
  uint64_t dofs;
  double h_min;
  double h_max;
  /**
   * Condition estimate; NaN when the scenario disables it.
   */
  double condition;
  /**
   * Iteration count of the linear solve (0 for the direct path).
   */
  uint64_t iterations;
  /**
   * Relative residual of the linear solve.
   */
  double residual;
  /**
   * Strain energy of the computed field.
   */
  double energy;
} CmRunSummary;

/**
 * Headline numbers of a geometry validation.
 */
typedef struct {
  double matrix_area;
  double pore_area;
  double interface_length;
  double analytic_pore_area;
  uint64_t warning_count;
} CmGeometrySummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread. Valid until the
 * next failing call from the same thread.
 */
const char *cm_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *cm_version(void);

/**
 * Loads a scenario file. On success stores a handle in `out`; the caller
 * frees it with `cm_scenario_free`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` a valid pointer.
 */
CmStatus cm_scenario_load(const char *path, CmScenario **out);

/**
 * Parses a scenario from TOML text; relative paths resolve against
 * `base_dir` (may be null for the current directory).
 *
 * # Safety
 * Pointer arguments must be null or valid NUL-terminated strings; `out`
 * must be a valid pointer.
 */
CmStatus cm_scenario_from_toml(const char *text, const char *base_dir, CmScenario **out);

/**
 * Releases a scenario handle. Null is accepted.
 *
 * # Safety
 * `scenario` must be null or a pointer from `cm_scenario_load` /
 * `cm_scenario_from_toml` that has not been freed.
 */
void cm_scenario_free(CmScenario *scenario);

/**
 * Runs a scenario. Artifacts are written under `out_dir` when it is not
 * null; `summary` (optional) receives the headline numbers.
 *
 * # Safety
 * `scenario` must be a live handle; `out_dir` null or a valid string;
 * `summary` null or a valid pointer.
 */
CmStatus cm_run(const CmScenario *scenario, const char *out_dir, CmRunSummary *summary);

/**
 * Effective macro modulus of the scenario's pore population.
 *
 * # Safety
 * `scenario` must be a live handle; `effective` a valid pointer.
 */
CmStatus cm_homogenize(const CmScenario *scenario, double *effective);

/**
 * Discrete-geometry check of the scenario.
 *
 * # Safety
 * `scenario` must be a live handle; `summary` a valid pointer.
 */
CmStatus cm_validate(const CmScenario *scenario, uint64_t seed, CmGeometrySummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CUTMIX_H */
