#ifndef GRAPHON_SPDE_H
#define GRAPHON_SPDE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result codes shared by all entry points.
 */
typedef enum GsStatus {
  GS_STATUS_OK = 0,
  GS_STATUS_INVALID_ARGUMENT = 1,
  GS_STATUS_INCOMMENSURABLE = 2,
  GS_STATUS_QUADRATURE_NON_CONVERGENCE = 3,
  GS_STATUS_ALIASING = 4,
  GS_STATUS_NON_FINITE = 5,
  GS_STATUS_RESOLUTION_MISMATCH = 6,
  GS_STATUS_UNBOUNDED_KERNEL = 7,
  GS_STATUS_PARSE = 8,
  GS_STATUS_IO = 9,
  GS_STATUS_NULL_POINTER = 10,
  GS_STATUS_BUFFER_TOO_SMALL = 11,
  GS_STATUS_PANIC = 12,
} GsStatus;

/**
 * Opaque fine-resolution noise path.
 */
typedef struct GsNoisePath GsNoisePath;

/**
 * Opaque continuum problem.
 */
typedef struct GsProblem GsProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`) and returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t gs_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gs_version(void);

/**
 * Builds a problem from textual component names, e.g. kernel `"band:r=0.25"`,
 * interaction `"kuramoto_sine"`, drift `"zero"`, initial `"parabola"`,
 * noise `"periodic:s=2.0,M=4096"`.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum GsStatus gs_problem_new(const char *kernel,
                             const char *interaction,
                             const char *drift,
                             const char *initial,
                             const char *noise,
                             double horizon,
                             struct GsProblem **out);

/**
 * # Safety
 * `problem` must come from [`gs_problem_new`] and not be freed twice.
 */
void gs_problem_free(struct GsProblem *problem);

/**
 * Synthesizes `steps` increments of the problem's noise on `n_fine` cells.
 *
 * # Safety
 * `problem` must be a live handle; `out` must be writable.
 */
enum GsStatus gs_noise_sample(const struct GsProblem *problem,
                              size_t n_fine,
                              double dt_fine,
                              size_t steps,
                              uint64_t seed,
                              struct GsNoisePath **out);

/**
 * # Safety
 * `path` must come from [`gs_noise_sample`] and not be freed twice.
 */
void gs_noise_path_free(struct GsNoisePath *path);

/**
 * Reports the dimensions of a noise path.
 *
 * # Safety
 * `path` must be a live handle; outputs must be writable.
 */
enum GsStatus gs_noise_path_dims(const struct GsNoisePath *path, size_t *n_fine, size_t *steps);

/**
 * Copies the `steps × n_fine` increments (time-major) into `buf`.
 *
 * # Safety
 * `path` must be a live handle; `buf` must hold `len` doubles.
 */
enum GsStatus gs_noise_path_copy(const struct GsNoisePath *path, double *buf, size_t len);

/**
 * Integrates to the horizon on `n` cells with step `dt`, writing the `n`
 * final cell values.
 *
 * # Safety
 * Handles must be live; `out` must hold `len ≥ n` doubles.
 */
enum GsStatus gs_integrate(const struct GsProblem *problem,
                           size_t n,
                           double dt,
                           const struct GsNoisePath *path,
                           double *out,
                           size_t len);

/**
 * Cell averages of a named kernel on the `n × n` grid, row-major.
 *
 * # Safety
 * `kernel` must be NUL-terminated; `out` must hold `len ≥ n²` doubles.
 */
enum GsStatus gs_project_kernel(const char *kernel, size_t n, double tol, double *out, size_t len);

/**
 * `h Σ_j K_ij S(u_i, u_j)` for a row-major `n × n` matrix `coeffs`.
 * A nonzero `circulant` enables the FFT path for the sine interaction.
 *
 * # Safety
 * `coeffs` must hold `n²` doubles, `u` and `out` `n` doubles each.
 */
enum GsStatus gs_apply_nonlocal(const double *coeffs,
                                size_t n,
                                int32_t circulant,
                                const char *interaction,
                                const double *u,
                                double *out);

/**
 * The noise rate functional `Ψ(n)` of a named spectrum.
 *
 * # Safety
 * `noise` must be NUL-terminated; `out` must be writable.
 */
enum GsStatus gs_psi(const char *noise, size_t n, double *out);

/**
 * Least-squares slope of `log y` against `log x` and its standard error.
 *
 * # Safety
 * `xs` and `ys` must hold `len` doubles; outputs must be writable.
 */
enum GsStatus gs_fit_rate(const double *xs,
                          const double *ys,
                          size_t len,
                          double *slope,
                          double *stderr);

/**
 * Spatial convergence study: MSE against the `n_star` solution for each of
 * the `count` resolutions in `n_list`, written to `mse_out`.
 *
 * # Safety
 * `problem` must be live; `n_list` and `mse_out` must hold `count` values.
 */
enum GsStatus gs_convergence_in_n(const struct GsProblem *problem,
                                  double dt,
                                  const size_t *n_list,
                                  size_t count,
                                  size_t n_star,
                                  size_t trials,
                                  uint64_t seed,
                                  double *mse_out);

/**
 * Temporal convergence study: MSE against the `dt_star` solution for each of
 * the `count` steps in `dt_list`, written to `mse_out`.
 *
 * # Safety
 * `problem` must be live; `dt_list` and `mse_out` must hold `count` values.
 */
enum GsStatus gs_convergence_in_dt(const struct GsProblem *problem,
                                   size_t n,
                                   const double *dt_list,
                                   size_t count,
                                   double dt_star,
                                   size_t trials,
                                   uint64_t seed,
                                   double *mse_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRAPHON_SPDE_H */
