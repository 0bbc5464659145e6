#ifndef FRACLAP_H
#define FRACLAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FlStatus {
  FL_STATUS_OK = 0,
  FL_STATUS_NULL_POINTER = 1,
  FL_STATUS_INVALID_ARGUMENT = 2,
  FL_STATUS_THRESHOLD_GUARD = 3,
  FL_STATUS_BUFFER_TOO_SMALL = 4,
  FL_STATUS_COMPUTE = 5,
  FL_STATUS_PANIC = 6,
} FlStatus;

typedef enum FlGrid {
  FL_GRID_PLAIN = 0,
  FL_GRID_HALF_INTEGER = 1,
  FL_GRID_ZERO_MODE_PROJECTED = 2,
} FlGrid;

/**
 * Opaque model handle.
 */
typedef struct FlModel FlModel;

/**
 * On-shell scattering data at one energy.
 */
typedef struct FlScatterResult {
  double lambda;
  double theta;
  /**
   * S row-major over (+, −), interleaved re/im.
   */
  double s[8];
  double det_s_re;
  double det_s_im;
  double unitarity_residual;
  double optical_residual;
  double route_difference;
  double reciprocity_residual;
} FlScatterResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. Valid until the next failing call
 * on the same thread.
 */
const char *fl_last_error_message(void);

void fl_clear_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fl_version(void);

/**
 * ϑ_r(θ); `+inf` on the polar set.
 *
 * # Safety
 * `r` and `theta` point to `d` doubles; `out` is writable.
 */
enum FlStatus fl_symbol(const double *r, size_t d, const double *theta, double *out);

/**
 * Kernel coefficients a_r(0), …, a_r(k_max) into `out` (length `k_max + 1`).
 *
 * # Safety
 * `out` points to `out_len` writable doubles.
 */
enum FlStatus fl_kernel_coeffs(double r, size_t k_max, double *out, size_t out_len);

/**
 * Finite thresholds of ϑ_r. Writes at most `cap` values and always stores the full count
 * in `count`; returns `FL_STATUS_BUFFER_TOO_SMALL` when `cap` is short.
 *
 * # Safety
 * `r` points to `d` doubles, `out` to `cap` writable doubles, `count` is writable.
 */
enum FlStatus fl_thresholds(const double *r, size_t d, double *out, size_t cap, size_t *count);

/**
 * Periodic torus (Z/nZ)^d; `grid` is an `FlGrid` value.
 *
 * # Safety
 * `r` points to `d` doubles; `out` is writable.
 */
enum FlStatus fl_model_torus_new(const double *r,
                                 size_t d,
                                 size_t n,
                                 uint32_t grid,
                                 struct FlModel **out);

/**
 * Box [−l, l]^d by kernel compression.
 *
 * # Safety
 * `r` points to `d` doubles; `out` is writable.
 */
enum FlStatus fl_model_box_new(const double *r, size_t d, size_t l, struct FlModel **out);

/**
 * Replace the potential by `count` point values; `sites` holds `count · d` coordinates.
 *
 * # Safety
 * `model` is a live handle; `sites` and `values` hold the stated number of entries.
 */
enum FlStatus fl_model_set_potential(struct FlModel *model,
                                     const int64_t *sites,
                                     const double *values,
                                     size_t count);

/**
 * Number of sites, or 0 for a null handle.
 *
 * # Safety
 * `model` is null or a live handle.
 */
size_t fl_model_sites(const struct FlModel *model);

/**
 * # Safety
 * `model` is null or a handle not yet freed.
 */
void fl_model_free(struct FlModel *model);

/**
 * (H − z)^{−1} f. `f` and `out` hold `2 · sites` doubles.
 *
 * # Safety
 * `model` is a live handle; buffers have the stated length.
 */
enum FlStatus fl_resolvent_apply(const struct FlModel *model,
                                 double z_re,
                                 double z_im,
                                 const double *f,
                                 double *out);

/**
 * e^{−itH} f. `f` and `out` hold `2 · sites` doubles.
 *
 * # Safety
 * `model` is a live handle; buffers have the stated length.
 */
enum FlStatus fl_evolve(const struct FlModel *model, double t, const double *f, double *out);

/**
 * Free lattice Green function G(λ + iη; lag) in d = 1; `eta == 0` selects the boundary
 * value λ + i0.
 *
 * # Safety
 * `re` and `im` are writable.
 */
enum FlStatus fl_green_1d(double r, double lambda, double eta, int64_t lag, double *re, double *im);

/**
 * One-dimensional scattering at energy λ for the point potential `values` on `sites`.
 *
 * # Safety
 * `sites` and `values` hold `count` entries; `out` is writable.
 */
enum FlStatus fl_scatter(double r,
                         double lambda,
                         const int64_t *sites,
                         const double *values,
                         size_t count,
                         struct FlScatterResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRACLAP_H */
