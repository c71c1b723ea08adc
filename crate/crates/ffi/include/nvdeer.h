#ifndef NVDEER_H
#define NVDEER_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NvdeerStatus {
  NVDEER_STATUS_OK = 0,
  NVDEER_STATUS_NULL_POINTER = 1,
  NVDEER_STATUS_INVALID_UTF8 = 2,
  NVDEER_STATUS_DOMAIN = 3,
  NVDEER_STATUS_PARAMETER = 4,
  NVDEER_STATUS_CONSTRAINT = 5,
  NVDEER_STATUS_VALIDATION = 6,
  NVDEER_STATUS_PARSE = 7,
  NVDEER_STATUS_CAPACITY = 8,
  NVDEER_STATUS_NUMERICAL = 9,
  NVDEER_STATUS_IO = 10,
  NVDEER_STATUS_OUT_OF_RANGE = 11,
  // The run finished but some sweep points failed; the curve holds the rest.
  NVDEER_STATUS_PARTIAL_FAILURE = 12,
  NVDEER_STATUS_PANIC = 13,
  NVDEER_STATUS_OTHER = 14,
} NvdeerStatus;

typedef enum NvdeerAxis {
  NVDEER_AXIS_TS_NS = 0,
  NVDEER_AXIS_FREQUENCY_MHZ = 1,
} NvdeerAxis;

// A simulated or user-supplied sweep.
typedef struct NvdeerCurve NvdeerCurve;

// Parsed experiment configuration.
typedef struct NvdeerExperiment NvdeerExperiment;

typedef struct NvdeerSingleSpinParams {
  double coupling_mhz;
  double detuning_mhz;
  double rabi_mhz;
  double tau_ns;
  double ts_ns;
  double offset_ns;
  bool instantaneous;
} NvdeerSingleSpinParams;

typedef struct NvdeerCurvePoint {
  double x;
  double signal_mean;
  double signal_sem;
  uint64_t n_realizations;
} NvdeerCurvePoint;

typedef struct NvdeerCurveMinimum {
  double min_signal;
  double x_at_min;
  double min_signal_sem;
  uint64_t index;
} NvdeerCurveMinimum;

typedef struct NvdeerLorentzianFit {
  double center_mhz;
  double fwhm_mhz;
  double amplitude;
  double baseline;
  double center_err;
  double fwhm_err;
  double amplitude_err;
  double baseline_err;
  double residual_norm;
  uint64_t iterations;
  bool converged;
} NvdeerLorentzianFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null if it
// succeeded. Owned by the library.
const char *nvdeer_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *nvdeer_version(void);

// Target Larmor frequency in MHz at `field_gauss`.
//
// # Safety
// `out_mhz` must be null or valid for writes.
enum NvdeerStatus nvdeer_larmor_frequency(double field_gauss, double *out_mhz);

// Closed-form echo floor for a uniform layer.
//
// # Safety
// `out_signal` must be null or valid for writes.
enum NvdeerStatus nvdeer_eq1_floor(double density_per_nm2,
                                   double depth_nm,
                                   double tau_ns,
                                   double *out_signal);

// Areal density in nm⁻² from a minimum echo signal.
//
// # Safety
// `out_density` must be null or valid for writes.
enum NvdeerStatus nvdeer_estimate_density(double min_signal,
                                          double depth_nm,
                                          double tau_ns,
                                          double *out_density);

// Echo factor of a single target.
//
// # Safety
// `params` must be null or point to a valid struct; `out_signal` must be
// null or valid for writes.
enum NvdeerStatus nvdeer_single_spin_deer(const struct NvdeerSingleSpinParams *params,
                                          double *out_signal);

// Parse and validate a TOML configuration.
//
// # Safety
// `toml` must be null or a NUL-terminated string; `out` must be null or
// valid for writes.
enum NvdeerStatus nvdeer_experiment_from_toml(const char *toml, struct NvdeerExperiment **out);

// # Safety
// `exp` must be null or a live handle from this library.
enum NvdeerStatus nvdeer_experiment_set_seed(struct NvdeerExperiment *exp, uint64_t seed);

// Run the configured sweep on `threads` workers (0 = all cores). Nothing
// is written to disk. On `PartialFailure` the curve is still returned.
//
// # Safety
// `exp` must be null or a live handle; `out_curve` must be null or valid
// for writes.
enum NvdeerStatus nvdeer_experiment_run(const struct NvdeerExperiment *exp,
                                        uint32_t threads,
                                        struct NvdeerCurve **out_curve);

// # Safety
// `exp` must be null or a handle not yet freed.
void nvdeer_experiment_free(struct NvdeerExperiment *exp);

// Build a curve from arrays of length `len`. `sem` may be null (zeros);
// each point counts as one realization.
//
// # Safety
// `x` and `y` (and `sem` if non-null) must point to `len` readable values;
// `out` must be null or valid for writes.
enum NvdeerStatus nvdeer_curve_from_arrays(enum NvdeerAxis axis,
                                           const double *x,
                                           const double *y,
                                           const double *sem,
                                           size_t len,
                                           struct NvdeerCurve **out);

// Number of points, or 0 for a null handle.
//
// # Safety
// `curve` must be null or a live handle.
size_t nvdeer_curve_len(const struct NvdeerCurve *curve);

// # Safety
// `curve` must be null or a live handle; `out` must be null or valid for
// writes.
enum NvdeerStatus nvdeer_curve_point(const struct NvdeerCurve *curve,
                                     size_t index,
                                     struct NvdeerCurvePoint *out);

// Minimum of the running-mean-smoothed curve.
//
// # Safety
// `curve` must be null or a live handle; `out` must be null or valid for
// writes.
enum NvdeerStatus nvdeer_curve_min(const struct NvdeerCurve *curve,
                                   size_t window,
                                   struct NvdeerCurveMinimum *out);

// Lorentzian fit of a frequency-axis curve.
//
// # Safety
// `curve` must be null or a live handle; `out` must be null or valid for
// writes.
enum NvdeerStatus nvdeer_fit_lorentzian(const struct NvdeerCurve *curve,
                                        struct NvdeerLorentzianFit *out);

// # Safety
// `curve` must be null or a handle not yet freed.
void nvdeer_curve_free(struct NvdeerCurve *curve);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NVDEER_H */
