#ifndef GTD_H
#define GTD_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum GtdStatus {
  GTD_STATUS_OK = 0,
  GTD_STATUS_NULL_POINTER = 1,
  GTD_STATUS_INVALID_ARGUMENT = 2,
  GTD_STATUS_PARSE = 3,
  GTD_STATUS_EVAL = 4,
  GTD_STATUS_DOMAIN = 5,
  GTD_STATUS_SINGULAR = 6,
  GTD_STATUS_BUFFER_TOO_SMALL = 7,
  GTD_STATUS_INTERNAL = 8,
} GtdStatus;

/**
 * How a geodesic integration stopped.
 */
typedef enum GtdTermination {
  GTD_TERMINATION_MAX_TAU = 0,
  GTD_TERMINATION_SINGULAR_BOUNDARY = 1,
  GTD_TERMINATION_DOMAIN_EXIT = 2,
  GTD_TERMINATION_STEP_UNDERFLOW = 3,
  GTD_TERMINATION_ESCAPE = 4,
  GTD_TERMINATION_MAX_STEPS = 5,
} GtdTermination;

/**
 * Parsed symbolic expression.
 */
typedef struct GtdExpr GtdExpr;

/**
 * Integrated geodesic.
 */
typedef struct GtdTrajectory GtdTrajectory;

/**
 * Van der Waals gas with parameters `(a, b, Λ)`; the curvature and the
 * geodesic system are built on first use.
 */
typedef struct GtdVdw GtdVdw;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *gtd_version(void);

/**
 * Message of the last failure on the calling thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *gtd_last_error_message(void);

/**
 * Clears the last error on the calling thread.
 */
void gtd_clear_error(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be NULL or a pointer obtained from this library and not yet freed.
 */
void gtd_string_free(char *s);

/**
 * Parses `text` into a new expression handle.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum GtdStatus gtd_expr_parse(const char *text, struct GtdExpr **out);

/**
 * # Safety
 * `e` must be NULL or a handle from this library not yet freed.
 */
void gtd_expr_free(struct GtdExpr *e);

/**
 * Canonical text of `e`; release with [`gtd_string_free`].
 *
 * # Safety
 * `e` must be a valid handle; `out` must be writable.
 */
enum GtdStatus gtd_expr_to_string(const struct GtdExpr *e, char **out);

/**
 * Simplified copy of `e`.
 *
 * # Safety
 * `e` must be a valid handle; `out` must be writable.
 */
enum GtdStatus gtd_expr_simplify(const struct GtdExpr *e, struct GtdExpr **out);

/**
 * Simplified partial derivative of `e` with respect to `var`.
 *
 * # Safety
 * `e` must be a valid handle, `var` a NUL-terminated string, `out` writable.
 */
enum GtdStatus gtd_expr_diff(const struct GtdExpr *e, const char *var, struct GtdExpr **out);

/**
 * Evaluates `e` with `names[k] = values[k]` for `k < n`.
 *
 * # Safety
 * `names` and `values` must point to `n` entries (may be NULL when `n` is
 * 0); `out` must be writable.
 */
enum GtdStatus gtd_expr_eval(const struct GtdExpr *e,
                             const char *const *names,
                             const double *values,
                             size_t n,
                             double *out);

/**
 * New van der Waals gas.
 *
 * # Safety
 * `out` must be writable.
 */
enum GtdStatus gtd_vdw_new(double a, double b, double lambda, struct GtdVdw **out);

/**
 * # Safety
 * `g` must be NULL or a handle from this library not yet freed.
 */
void gtd_vdw_free(struct GtdVdw *g);

/**
 * Scalar curvature at `(u, v)`; [`GtdStatus::Singular`] near the
 * singular locus.
 *
 * # Safety
 * `g` must be a valid handle; `out` must be writable.
 */
enum GtdStatus gtd_vdw_scalar_curvature(const struct GtdVdw *g, double u, double v, double *out);

/**
 * Energy on the phase boundary at volume `v`.
 *
 * # Safety
 * `g` must be a valid handle; `out` must be writable.
 */
enum GtdStatus gtd_vdw_phase_boundary_energy(const struct GtdVdw *g, double v, double *out);

/**
 * Relative residual of the phase-boundary relation at `(u, v)`.
 *
 * # Safety
 * `g` must be a valid handle; `out` must be writable.
 */
enum GtdStatus gtd_vdw_boundary_residual(const struct GtdVdw *g, double u, double v, double *out);

/**
 * Roots `V > b` of `PV³ − aV + 2ab`. Writes up to `capacity` roots and
 * the total count to `count`; returns [`GtdStatus::BufferTooSmall`] when
 * `capacity` is insufficient.
 *
 * # Safety
 * `g` must be a valid handle; `roots` must hold `capacity` values (may be
 * NULL when `capacity` is 0); `count` must be writable.
 */
enum GtdStatus gtd_vdw_singular_locus(const struct GtdVdw *g,
                                      double pressure,
                                      double *roots,
                                      size_t capacity,
                                      size_t *count);

/**
 * Integrates the geodesic from `(u0, v0)` with velocity `(du0, dv0)` up to
 * affine parameter `tau_max`, with default tolerances.
 *
 * # Safety
 * `g` must be a valid handle; `out` must be writable.
 */
enum GtdStatus gtd_vdw_geodesic(const struct GtdVdw *g,
                                double u0,
                                double v0,
                                double du0,
                                double dv0,
                                double tau_max,
                                struct GtdTrajectory **out);

/**
 * # Safety
 * `t` must be NULL or a handle from this library not yet freed.
 */
void gtd_trajectory_free(struct GtdTrajectory *t);

/**
 * Number of samples; 0 for NULL.
 *
 * # Safety
 * `t` must be NULL or a valid handle.
 */
size_t gtd_trajectory_len(const struct GtdTrajectory *t);

/**
 * Writes sample `index` as `[tau, U, V, dU, dV]`.
 *
 * # Safety
 * `t` must be a valid handle; `out` must hold 5 values.
 */
enum GtdStatus gtd_trajectory_sample(const struct GtdTrajectory *t, size_t index, double *out);

/**
 * Termination kind of the integration.
 *
 * # Safety
 * `t` must be a valid handle; `out` must be writable.
 */
enum GtdStatus gtd_trajectory_termination(const struct GtdTrajectory *t, enum GtdTermination *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GTD_H */
