#ifndef GENTRANS_H
#define GENTRANS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum GtStatus {
  GtStatus_Ok = 0,
  GtStatus_NullPointer = 1,
  /**
   * Invalid argument, configuration, schema or protocol.
   */
  GtStatus_InvalidArgument = 2,
  /**
   * Invalid or unreadable data.
   */
  GtStatus_Data = 3,
  /**
   * Numerical failure or non-convergence.
   */
  GtStatus_Numerical = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  GtStatus_Panic = 5,
} GtStatus;

typedef enum GtMethod {
  GtMethod_Plugin = 0,
  GtMethod_Dr = 1,
} GtMethod;

typedef enum GtKind {
  GtKind_Generalization = 0,
  GtKind_Transportation = 1,
} GtKind;

typedef enum GtArm {
  GtArm_Control = 0,
  GtArm_Treated = 1,
  GtArm_Contrast = 2,
} GtArm;

/**
 * Cross-fitted nuisance predictions for one sample.
 */
typedef struct GtFit GtFit;

/**
 * Combined source and target sample.
 */
typedef struct GtSample GtSample;

/**
 * Point estimate with a Wald interval.
 */
typedef struct GtEstimate {
  double point;
  double se;
  double ci_lower;
  double ci_upper;
  size_t n_used;
} GtEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the last failure on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *gt_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gt_version(void);

/**
 * Builds a sample from row-major arrays.
 *
 * `x` holds `n1 * d` source covariates, `a` the `n1` treatments (0 or 1),
 * `y` the `n1` outcomes, `v` the `n2 * dv` target covariates, and
 * `v_index` the `dv` positions of the target covariates within `x`.
 *
 * # Safety
 * Every pointer must be valid for the stated number of elements, and `out`
 * must be writable.
 */
enum GtStatus gt_sample_new(size_t d,
                            const size_t *v_index,
                            size_t dv,
                            size_t n1,
                            const double *x,
                            const uint8_t *a,
                            const double *y,
                            size_t n2,
                            const double *v,
                            struct GtSample **out);

/**
 * Loads a sample from source and target CSV files described by a TOML
 * schema.
 *
 * # Safety
 * Paths must be NUL-terminated strings and `out` writable.
 */
enum GtStatus gt_sample_load_csv(const char *source_path,
                                 const char *target_path,
                                 const char *schema_path,
                                 struct GtSample **out);

/**
 * Draws `n` records from the built-in five-covariate simulation design.
 *
 * # Safety
 * `out` must be writable.
 */
enum GtStatus gt_sample_simulate(size_t n, uint64_t seed, struct GtSample **out);

/**
 * Number of source and target records.
 *
 * # Safety
 * `sample` must be a live handle; the outputs must be writable.
 */
enum GtStatus gt_sample_sizes(const struct GtSample *sample, size_t *n1, size_t *n2);

/**
 * # Safety
 * `sample` must be NULL or a handle not yet freed.
 */
void gt_sample_free(struct GtSample *sample);

/**
 * Cross-fits the default nuisance learners over `folds` random folds.
 *
 * # Safety
 * `sample` must be a live handle and `out` writable.
 */
enum GtStatus gt_fit_crossfit(const struct GtSample *sample,
                              size_t folds,
                              uint64_t seed,
                              double eps,
                              struct GtFit **out);

/**
 * # Safety
 * `fit` must be NULL or a handle not yet freed.
 */
void gt_fit_free(struct GtFit *fit);

/**
 * Plug-in or doubly robust estimate.
 *
 * # Safety
 * Handles must be live and belong together; `out` must be writable.
 */
enum GtStatus gt_estimate(const struct GtSample *sample,
                          const struct GtFit *fit,
                          enum GtMethod method,
                          enum GtKind kind,
                          enum GtArm arm,
                          struct GtEstimate *out);

/**
 * Bounds around the doubly robust estimate for sensitivity parameters
 * `delta1` (exchangeability) and `delta2` (transportability).
 *
 * # Safety
 * Handles must be live; `lower` and `upper` writable.
 */
enum GtStatus gt_sensitivity(const struct GtSample *sample,
                             const struct GtFit *fit,
                             enum GtKind kind,
                             enum GtArm arm,
                             double delta1,
                             double delta2,
                             double *lower,
                             double *upper);

/**
 * Break-even sensitivity values for a point estimate and half-width
 * coefficients `c1`, `c2`: `|point| / c1` and `|point| / c2`.
 *
 * # Safety
 * `delta1` and `delta2` must be writable.
 */
enum GtStatus gt_breakeven(double point, double c1, double c2, double *delta1, double *delta2);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GENTRANS_H */
