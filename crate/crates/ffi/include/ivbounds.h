#ifndef IVBOUNDS_H
#define IVBOUNDS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum IvbStatus {
  IVB_STATUS_OK = 0,
  // A required pointer argument was NULL.
  IVB_STATUS_NULL_POINTER = 1,
  // An argument was out of range or inconsistent.
  IVB_STATUS_INVALID_ARGUMENT = 2,
  // The records failed validation or could not be parsed.
  IVB_STATUS_DATA_ERROR = 3,
  // A model fit or inversion failed numerically.
  IVB_STATUS_NUMERICAL_ERROR = 4,
  // The data cannot identify the requested quantity (weak instrument,
  // empty cell, crossed bound).
  IVB_STATUS_IDENTIFICATION_ERROR = 5,
  // Too many bootstrap replicates failed, or too few were requested.
  IVB_STATUS_BOOTSTRAP_ERROR = 6,
  // A file could not be read.
  IVB_STATUS_IO_ERROR = 7,
  // The library panicked; this is a bug.
  IVB_STATUS_PANIC = 8,
} IvbStatus;

// Which assumption set the bounds use. Passed as an `int`.
typedef enum IvbAssumption {
  // Caps on how far the unidentified stratum means may sit from zero.
  IVB_ASSUMPTION_A = 0,
  // Ordering restrictions on stratum means.
  IVB_ASSUMPTION_B = 1,
  // Ordering restrictions conditional on the covariates.
  IVB_ASSUMPTION_B_PRIME = 2,
} IvbAssumption;

// Point estimator selector. Passed as an `int`.
typedef enum IvbMethod {
  IVB_METHOD_AS_TREATED = 0,
  IVB_METHOD_IPW = 1,
  // IPW corrected for a given level of unmeasured confounding.
  IVB_METHOD_MODIFIED_IPW = 2,
  IVB_METHOD_INSTRUMENTAL_VARIABLE = 3,
} IvbMethod;

// Opaque dataset handle.
typedef struct IvbDataset IvbDataset;

typedef struct IvbEstimate {
  double value;
  // Untreated mean for the weighting estimators; intercept of the
  // instrument regression for IV.
  double intercept;
  // Analytic standard error, NaN when the estimator has none.
  double se;
} IvbEstimate;

// Assumption constants; unused ones are ignored. Zero-initialise for the
// defaults.
typedef struct IvbParams {
  double xi0;
  double xi1;
  double delta11;
  double delta00;
  double delta_y0;
  double delta_trt;
} IvbParams;

typedef struct IvbInterval {
  double lower;
  double upper;
} IvbInterval;

typedef struct IvbBounds {
  struct IvbInterval ate;
  struct IvbInterval tau;
} IvbBounds;

// Bound on one target with its bootstrap standard errors and the three
// uncertainty regions.
typedef struct IvbRegion {
  struct IvbInterval bound;
  double se_lower;
  double se_upper;
  // Covers each point of the bound at the requested level.
  struct IvbInterval pointwise_normal;
  // Covers the whole bound at the requested level.
  struct IvbInterval strong_normal;
  // Shortest interval holding the requested share of replicate bounds.
  // Only meaningful when `has_strong_bootstrap` is set.
  struct IvbInterval strong_bootstrap;
  bool has_strong_bootstrap;
  // The bound is narrow relative to its standard errors.
  bool approximate;
} IvbRegion;

typedef struct IvbUncertainty {
  struct IvbRegion ate;
  struct IvbRegion tau;
  // Replicates that raised an estimation error and were dropped.
  size_t failures;
} IvbUncertainty;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Builds a dataset from column arrays of length `n`. `covariates` is
// row-major `n x p` and may be NULL when `p == 0`. `covariate_names` may be
// NULL, in which case columns are named `v1..vp`. On success `*out` owns a
// new handle that must be released with `ivb_dataset_free`.
//
// # Safety
// Each non-NULL pointer must reference the stated number of readable
// elements; `covariate_names` entries must be NUL-terminated strings.
enum IvbStatus ivb_dataset_from_arrays(const double *y,
                                       const uint8_t *a,
                                       const uint8_t *z,
                                       size_t n,
                                       const double *covariates,
                                       size_t p,
                                       const char *const *covariate_names,
                                       struct IvbDataset **out);

// Reads a CSV file with a header row. Column-name arguments may be NULL to
// use `y`, `a` and `z`; `covariates` is a comma-separated list of column
// names, or NULL / empty for none.
//
// # Safety
// String arguments must be NULL or NUL-terminated; `out` must be writable.
enum IvbStatus ivb_dataset_load_csv(const char *path,
                                    const char *outcome,
                                    const char *treatment,
                                    const char *instrument,
                                    const char *covariates,
                                    struct IvbDataset **out);

// Releases a handle. NULL is ignored.
//
// # Safety
// `dataset` must be NULL or a handle not yet freed.
void ivb_dataset_free(struct IvbDataset *dataset);

// Number of records, or 0 for NULL.
//
// # Safety
// `dataset` must be NULL or a live handle.
size_t ivb_dataset_rows(const struct IvbDataset *dataset);

// Number of covariates, or 0 for NULL.
//
// # Safety
// `dataset` must be NULL or a live handle.
size_t ivb_dataset_covariates(const struct IvbDataset *dataset);

// Point estimate of the treatment effect. `method` is an `IvbMethod`
// value; `tau` is used only by `IVB_METHOD_MODIFIED_IPW`.
//
// # Safety
// `dataset` must be a live handle and `out` writable.
enum IvbStatus ivb_estimate(const struct IvbDataset *dataset,
                            int method,
                            double tau,
                            struct IvbEstimate *out);

// Level of unmeasured confounding implied by a candidate ATE.
//
// # Safety
// `dataset` must be a live handle and `out` writable.
enum IvbStatus ivb_tau_at(const struct IvbDataset *dataset, double ate, double *out);

// Bounds on the ATE and on tau. `assumption` is an `IvbAssumption` value;
// `params` may be NULL for all-zero constants.
//
// # Safety
// `dataset` must be a live handle, `params` NULL or readable, `out` writable.
enum IvbStatus ivb_bounds(const struct IvbDataset *dataset,
                          int assumption,
                          const struct IvbParams *params,
                          struct IvbBounds *out);

// Bounds with `replicates` stratified bootstrap resamples drawn from
// `seed`, and the uncertainty regions at coverage `level`. Results are
// identical for identical inputs.
//
// # Safety
// `dataset` must be a live handle, `params` NULL or readable, `out` writable.
enum IvbStatus ivb_bootstrap_ur(const struct IvbDataset *dataset,
                                int assumption,
                                const struct IvbParams *params,
                                size_t replicates,
                                uint64_t seed,
                                double level,
                                struct IvbUncertainty *out);

// Message for the most recent failed call on this thread, or an empty
// string after a successful one. The pointer stays valid until the next
// library call on the same thread.
const char *ivb_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ivb_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IVBOUNDS_H */
