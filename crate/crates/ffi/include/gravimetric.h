#ifndef GRAVIMETRIC_H
#define GRAVIMETRIC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a call; values match the command-line exit codes.
typedef enum GmStatus {
  GM_STATUS_OK = 0,
  // Bad arguments, unreadable or invalid input data.
  GM_STATUS_INPUT = 2,
  // The fit hit its iteration cap; the handle is still filled in.
  GM_STATUS_CONVERGENCE = 3,
  // Rank deficiency, non-positive-definite Hessian and similar; a fit
  // handle is still filled in when coefficients exist.
  GM_STATUS_NUMERICAL = 4,
  GM_STATUS_INTERNAL = 5,
} GmStatus;

// Loaded input bundle.
typedef struct GmDataset GmDataset;

// Estimated model.
typedef struct GmFit GmFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty when none.
// The pointer stays valid until the next failing call on the same thread.
const char *gm_last_error_message(void);

// Library version, a static NUL-terminated string.
const char *gm_version(void);

// Loads `flows.csv`, `attrs.csv` and any optional inputs from `dir`.
//
// # Safety
// `dir` must be a NUL-terminated string and `out` a valid pointer.
enum GmStatus gm_dataset_load(const char *dir, struct GmDataset **out);

// # Safety
// `ds` must come from [`gm_dataset_load`] and not be used afterwards.
void gm_dataset_free(struct GmDataset *ds);

// Computes `exporter`'s remoteness series from the bilateral and distance
// inputs when the dataset has no remoteness file. A no-op otherwise.
//
// # Safety
// `ds` must be a live handle and `exporter` NUL-terminated.
enum GmStatus gm_dataset_compute_remoteness(struct GmDataset *ds, const char *exporter);

// Number of trade-flow records, or 0 for a null handle.
//
// # Safety
// `ds` must be null or a live handle.
uintptr_t gm_dataset_n_flows(const struct GmDataset *ds);

// Fits one model.
//
// `estimator` is `ols`, `ppml` or `nbpml`. `spec_json` is a model spec in
// JSON, or null for the basic model. `sector` is a sector name, or null for
// the pooled fit. On `GM_STATUS_CONVERGENCE` and on a non-positive-definite
// Hessian (`GM_STATUS_NUMERICAL`) `*out` is still set and must be freed.
//
// # Safety
// String arguments must be NUL-terminated or null where allowed; `ds` must
// be a live handle and `out` a valid pointer.
enum GmStatus gm_fit(const struct GmDataset *ds,
                     const char *estimator,
                     const char *spec_json,
                     const char *sector,
                     struct GmFit **out);

// # Safety
// `fit` must come from [`gm_fit`] and not be used afterwards.
void gm_fit_free(struct GmFit *fit);

// # Safety
// `fit` must be null or a live handle.
uintptr_t gm_fit_n_coefficients(const struct GmFit *fit);

// Column name of coefficient `i`, owned by the handle; null when out of range.
//
// # Safety
// `fit` must be null or a live handle.
const char *gm_fit_coefficient_name(const struct GmFit *fit, uintptr_t i);

// # Safety
// `fit` must be a live handle and `value` a valid pointer.
enum GmStatus gm_fit_coefficient(const struct GmFit *fit, uintptr_t i, double *value);

// Cluster-robust standard error of coefficient `i`; `GM_STATUS_NUMERICAL`
// when the covariance was withheld.
//
// # Safety
// `fit` must be a live handle and `value` a valid pointer.
enum GmStatus gm_fit_robust_se(const struct GmFit *fit, uintptr_t i, double *value);

// Log-likelihood, or NaN for a null handle.
//
// # Safety
// `fit` must be null or a live handle.
double gm_fit_loglik(const struct GmFit *fit);

// JSON summary of the fit; release with [`gm_string_free`]. Null on failure.
//
// # Safety
// `fit` must be null or a live handle.
char *gm_fit_to_json(const struct GmFit *fit);

// # Safety
// `s` must come from this library and not be used afterwards.
void gm_string_free(char *s);

// `(exp(beta) - 1) * 100`.
double gm_percent_effect(double beta);

// `(exp(beta_scenario - beta_soft) - 1) * 100`.
double gm_indicator_relative_impact(double beta_scenario, double beta_soft);

// `(beta_scenario - beta_soft) / beta_soft * 100`; fails when `beta_soft` is 0.
//
// # Safety
// `value` must be a valid pointer.
enum GmStatus gm_continuous_relative_impact(double beta_scenario, double beta_soft, double *value);

// `(exp(delta - 2 se) - 1) * 100`.
double gm_worst_case_two_se(double delta, double se);

// GNI* less the export loss against the soft scenario, and its percent change.
//
// # Safety
// `adjusted` and `percent_change` must be valid pointers.
enum GmStatus gm_gni_adjustment(double gni_star,
                                double soft_total,
                                double scenario_total,
                                double *adjusted,
                                double *percent_change);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRAVIMETRIC_H */
