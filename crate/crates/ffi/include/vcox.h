#ifndef VCOX_H
#define VCOX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VcoxStatus {
  VCOX_STATUS_OK = 0,
  VCOX_STATUS_NULL_POINTER = 1,
  VCOX_STATUS_INVALID_ARGUMENT = 2,
  VCOX_STATUS_INVALID_DATA = 3,
  VCOX_STATUS_INGEST = 4,
  VCOX_STATUS_IO = 5,
  VCOX_STATUS_NUMERICAL = 6,
  VCOX_STATUS_OUT_OF_RANGE = 7,
  VCOX_STATUS_PANIC = 8,
} VcoxStatus;

typedef enum VcoxKernel {
  VCOX_KERNEL_EPANECHNIKOV = 0,
  VCOX_KERNEL_GAUSSIAN = 1,
  VCOX_KERNEL_UNIFORM = 2,
} VcoxKernel;

typedef enum VcoxMultiplier {
  VCOX_MULTIPLIER_CENTERED_EXPONENTIAL = 0,
  VCOX_MULTIPLIER_RADEMACHER = 1,
  VCOX_MULTIPLIER_STANDARD_NORMAL = 2,
} VcoxMultiplier;

// A simultaneous confidence band.
typedef struct VcoxBand VcoxBand;

// A fitted coefficient curve with sandwich covariances.
typedef struct VcoxCurve VcoxCurve;

// A validated dataset.
typedef struct VcoxDataset VcoxDataset;

// Accumulates subjects before validation into a [`VcoxDataset`].
typedef struct VcoxDatasetBuilder VcoxDatasetBuilder;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static nul-terminated string.
const char *vcox_version(void);

// Message of the last failed call on this thread, or null after a success.
// The pointer stays valid until the next call into the library on this thread.
const char *vcox_last_error(void);

// Reads the subjects and longitudinal CSV files. A NaN `tau` defaults to the
// largest follow-up time.
//
// # Safety
// The paths must be nul-terminated strings and `out` a valid pointer.
enum VcoxStatus vcox_dataset_load_csv(const char *subjects_csv,
                                      const char *longitudinal_csv,
                                      double tau,
                                      struct VcoxDataset **out);

// Starts an empty dataset with `p` covariates per observation.
//
// # Safety
// `out` must be a valid pointer.
enum VcoxStatus vcox_builder_new(size_t p, struct VcoxDatasetBuilder **out);

// Appends one subject. `covariates` is row-major `n_obs x p`; observation
// times must be strictly ascending.
//
// # Safety
// `builder` must come from [`vcox_builder_new`]; `id` must be nul-terminated;
// the arrays must hold `n_obs` and `n_obs * p` values.
enum VcoxStatus vcox_builder_add_subject(struct VcoxDatasetBuilder *builder,
                                         const char *id,
                                         double follow_up_time,
                                         bool event,
                                         const double *obs_times,
                                         const double *covariates,
                                         size_t n_obs);

// Validates the accumulated subjects into a dataset. The builder is consumed
// and must not be used or freed afterwards, whatever the outcome.
//
// # Safety
// `builder` must come from [`vcox_builder_new`]; `out` must be valid.
enum VcoxStatus vcox_builder_finish(struct VcoxDatasetBuilder *builder,
                                    double tau,
                                    struct VcoxDataset **out);

// # Safety
// `builder` must come from [`vcox_builder_new`] and not have been finished.
void vcox_builder_free(struct VcoxDatasetBuilder *builder);

// # Safety
// `data` must be null or a live dataset handle.
size_t vcox_dataset_n(const struct VcoxDataset *data);

// # Safety
// `data` must be null or a live dataset handle.
size_t vcox_dataset_dim(const struct VcoxDataset *data);

// # Safety
// `data` must be null or a live dataset handle.
double vcox_dataset_tau(const struct VcoxDataset *data);

// # Safety
// `data` must be null or a dataset handle not yet freed.
void vcox_dataset_free(struct VcoxDataset *data);

// Fits the curve at the `grid_len` points of `grid` with bandwidths
// `(h1, h2)` and attaches sandwich covariances. Points that fail to converge
// are flagged rather than fatal.
//
// # Safety
// `data` must be live, `grid` must hold `grid_len` values and `out` be valid.
enum VcoxStatus vcox_fit_curve(const struct VcoxDataset *data,
                               double h1,
                               double h2,
                               const double *grid,
                               size_t grid_len,
                               enum VcoxKernel kernel,
                               struct VcoxCurve **out);

// # Safety
// `curve` must be null or a live curve handle.
size_t vcox_curve_len(const struct VcoxCurve *curve);

// # Safety
// `curve` must be null or a live curve handle.
size_t vcox_curve_dim(const struct VcoxCurve *curve);

// Target time and convergence flag of point `idx`; writes `p` coefficients
// to `beta` and `p` standard errors to `se` (NaN where unavailable). Either
// array may be null.
//
// # Safety
// `curve` must be live; non-null arrays must hold `p` values.
enum VcoxStatus vcox_curve_point(const struct VcoxCurve *curve,
                                 size_t idx,
                                 double *s,
                                 bool *converged,
                                 double *beta,
                                 double *se);

// # Safety
// `curve` must be null or a curve handle not yet freed.
void vcox_curve_free(struct VcoxCurve *curve);

// Simultaneous band for coefficient `component` over the curve's grid,
// weighted by the inverse standard error. Every curve point must have
// converged.
//
// # Safety
// `data` and `curve` must be live handles and `out` valid.
enum VcoxStatus vcox_scb(const struct VcoxDataset *data,
                         const struct VcoxCurve *curve,
                         size_t component,
                         double alpha,
                         size_t n_boot,
                         enum VcoxMultiplier multiplier,
                         uint64_t seed,
                         struct VcoxBand **out);

// # Safety
// `band` must be null or a live band handle.
size_t vcox_band_len(const struct VcoxBand *band);

// # Safety
// `band` must be null or a live band handle.
double vcox_band_c_alpha(const struct VcoxBand *band);

// Copies the grid, estimate and band limits, `len` values each. Any array may
// be null.
//
// # Safety
// `band` must be live; non-null arrays must hold `len` values.
enum VcoxStatus vcox_band_values(const struct VcoxBand *band,
                                 size_t len,
                                 double *s,
                                 double *estimate,
                                 double *lower,
                                 double *upper);

// # Safety
// `band` must be null or a band handle not yet freed.
void vcox_band_free(struct VcoxBand *band);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VCOX_H */
