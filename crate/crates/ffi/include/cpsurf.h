#ifndef CPSURF_H
#define CPSURF_H

/* Generated by cbindgen from cpsurf-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Polarization selector.
typedef enum CpsurfPolarization {
  CPSURF_POLARIZATION_TE = 0,
  CPSURF_POLARIZATION_TM = 1,
} CpsurfPolarization;

// Potential regime selector.
typedef enum CpsurfRegime {
  CPSURF_REGIME_FULL = 0,
  CPSURF_REGIME_SHORT_RANGE = 1,
  CPSURF_REGIME_LONG_RANGE = 2,
} CpsurfRegime;

// Status codes returned by every fallible call.
typedef enum CpsurfStatus {
  CPSURF_STATUS_OK = 0,
  CPSURF_STATUS_NULL_ARGUMENT = 1,
  CPSURF_STATUS_INVALID_UTF8 = 2,
  CPSURF_STATUS_CONFIG_ERROR = 3,
  CPSURF_STATUS_DOMAIN_ERROR = 4,
  CPSURF_STATUS_CONVERGENCE_ERROR = 5,
  CPSURF_STATUS_IO_ERROR = 6,
  CPSURF_STATUS_PARSE_ERROR = 7,
  CPSURF_STATUS_DEGENERATE_DATA = 8,
  // The requested state holds no bound level (a valid physics outcome).
  CPSURF_STATUS_UNTRAPPED = 9,
  CPSURF_STATUS_INTERNAL_PANIC = 10,
} CpsurfStatus;

// Opaque handle: a resolved run setup plus its prepared potential
// evaluator. The evaluator borrows the boxed setup; it is declared first
// so it drops before the setup it references.
typedef struct CpsurfSetup CpsurfSetup;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Load and resolve a run configuration (fixtures, stack, line lists).
// Returns null on failure; the message is available via
// `cpsurf_last_error`.
//
// # Safety
// `config_path` must be a valid NUL-terminated string.
struct CpsurfSetup *cpsurf_setup_load(const char *config_path);

// Release a setup handle. Passing null is a no-op.
//
// # Safety
// `handle` must be a pointer returned by `cpsurf_setup_load` that has not
// been freed already.
void cpsurf_setup_free(struct CpsurfSetup *handle);

// Copy the last error message of this thread into `buf` (truncated,
// always NUL-terminated). Returns the full message length in bytes.
//
// # Safety
// `buf` must point to `len` writable bytes (or be null with len 0).
size_t cpsurf_last_error(char *buf, size_t len);

// Total surface potential of a configured state at distance `z_m`, J.
//
// # Safety
// `handle` must be a live setup handle, `state_label` a NUL-terminated
// string, `out_joules` a writable f64 pointer.
enum CpsurfStatus cpsurf_potential(struct CpsurfSetup *handle,
                                   const char *state_label,
                                   double z_m,
                                   enum CpsurfRegime regime,
                                   double *out_joules);

// Complex reflection amplitude of the configured stack at a real
// wavelength and transverse wavevector.
//
// # Safety
// `handle` must be a live setup handle; `out_re`/`out_im` writable.
enum CpsurfStatus cpsurf_reflection(struct CpsurfSetup *handle,
                                    double wavelength_m,
                                    double k_t,
                                    enum CpsurfPolarization polarization,
                                    double *out_re,
                                    double *out_im);

// Predicted site-1 transition shift against the far-site reference, Hz.
// Returns `Untrapped` when a configured state holds no bound level in the
// first site for this regime.
//
// # Safety
// `handle` must be a live setup handle; `out_shift_hz` writable.
enum CpsurfStatus cpsurf_predict_shift(struct CpsurfSetup *handle,
                                       enum CpsurfRegime regime,
                                       double *out_shift_hz);

// Area-normalized Voigt profile times amplitude, plus offset. Stateless.
//
// # Safety
// `out` must be a writable f64 pointer.
enum CpsurfStatus cpsurf_voigt(double x,
                               double center,
                               double gaussian_sigma,
                               double lorentz_gamma,
                               double amplitude,
                               double offset,
                               double *out);

// Library version as a static NUL-terminated string.
const char *cpsurf_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CPSURF_H */
