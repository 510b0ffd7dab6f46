/* Generated by cbindgen from the fblab-ffi crate; do not edit. */

#ifndef FBLAB_H
#define FBLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum {
  FBLAB_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  FBLAB_STATUS_NULL_POINTER = 1,
  /**
   * An argument lies outside the domain of the operation.
   */
  FBLAB_STATUS_INVALID_ARGUMENT = 2,
  /**
   * An iterative method hit its cap or could not bracket a root.
   */
  FBLAB_STATUS_NOT_CONVERGED = 3,
  /**
   * Inputs disagree or a value overflowed.
   */
  FBLAB_STATUS_NUMERICAL = 4,
  /**
   * File or parse failure.
   */
  FBLAB_STATUS_IO = 5,
  /**
   * A caller-supplied buffer is too small.
   */
  FBLAB_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * Internal panic, contained at the boundary.
   */
  FBLAB_STATUS_PANIC = 7,
} FblabStatus;

/**
 * Side of the comparison ball in the touch test.
 */
typedef enum {
  /**
   * Ball in the positive set, `mu > 0`.
   */
  FBLAB_SIDE_ABOVE = 0,
  /**
   * Ball in the zero set, `mu < 0`.
   */
  FBLAB_SIDE_BELOW = 1,
} FblabSide;

/**
 * Nodal field on a uniform 1D or 2D grid.
 */
typedef struct FblabField FblabField;

/**
 * Exponent parameters for one `gamma` in (0, 2).
 */
typedef struct FblabParams FblabParams;

/**
 * Radial exterior solution.
 */
typedef struct FblabRadial FblabRadial;

/**
 * Exponent constants of one `gamma`.
 */
typedef struct {
  double gamma;
  double alpha;
  double c_alpha;
  double s;
  double c_gamma;
} FblabExponents;

/**
 * Energy split of a field.
 */
typedef struct {
  double dirichlet;
  double potential;
  double total;
} FblabEnergy;

/**
 * Flatness of a field in one ball: best direction and relative offset.
 */
typedef struct {
  double nu_x;
  double nu_y;
  double epsilon;
} FblabFlatness;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty after success.
 */
const char *fblab_last_error(void);

/**
 * Library version, NUL-terminated, static.
 */
const char *fblab_version(void);

/**
 * Creates exponent parameters for `gamma` in (0, 2).
 *
 * # Safety
 * `out` must be valid for writes.
 */
FblabStatus fblab_params_new(double gamma, FblabParams **out);

/**
 * # Safety
 * `p` must be NULL or a handle from [`fblab_params_new`] not yet freed.
 */
void fblab_params_free(FblabParams *p);

/**
 * # Safety
 * `p` must be a live handle and `out` valid for writes.
 */
FblabStatus fblab_params_exponents(const FblabParams *p, FblabExponents *out);

/**
 * One-dimensional profile `c_alpha (t^+)^alpha`.
 *
 * # Safety
 * `p` must be a live handle and `out` valid for writes.
 */
FblabStatus fblab_params_profile(const FblabParams *p, double t, double *out);

/**
 * Shoots the exterior radial solution in dimension `n >= 1`.
 *
 * # Safety
 * `p` must be a live handle and `out` valid for writes.
 */
FblabStatus fblab_radial_solve(const FblabParams *p, size_t n, double shoot_tol, FblabRadial **out);

/**
 * # Safety
 * `r` must be NULL or a handle from [`fblab_radial_solve`] not yet freed.
 */
void fblab_radial_free(FblabRadial *r);

/**
 * Free-boundary offset: the zero set starts at radius `1 + mu`.
 *
 * # Safety
 * `r` must be a live handle and `out` valid for writes.
 */
FblabStatus fblab_radial_mu(const FblabRadial *r, double *out);

/**
 * Value of the radial solution at `radius`.
 *
 * # Safety
 * `r` must be a live handle and `out` valid for writes.
 */
FblabStatus fblab_radial_value(const FblabRadial *r, double radius, double *out);

/**
 * Field on `[x_min, x_max]` with `cells` cells; `values` holds `cells + 1` nodes.
 *
 * # Safety
 * `values` must point to `len` readable doubles and `out` be valid for writes.
 */
FblabStatus fblab_field_new_1d(double x_min,
                               double x_max,
                               size_t cells,
                               const double *values,
                               size_t len,
                               FblabField **out);

/**
 * Field on a rectangle with square cells, nodes row-major with x fastest.
 *
 * # Safety
 * `values` must point to `len` readable doubles and `out` be valid for writes.
 */
FblabStatus fblab_field_new_2d(double x_min,
                               double x_max,
                               double y_min,
                               double y_max,
                               size_t nx_cells,
                               size_t ny_cells,
                               const double *values,
                               size_t len,
                               FblabField **out);

/**
 * Reads a field written by [`fblab_field_save_csv`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for writes.
 */
FblabStatus fblab_field_load_csv(const char *path, FblabField **out);

/**
 * # Safety
 * `f` must be a live handle and `path` a NUL-terminated string.
 */
FblabStatus fblab_field_save_csv(const FblabField *f, const char *path);

/**
 * # Safety
 * `f` must be NULL or a field handle not yet freed.
 */
void fblab_field_free(FblabField *f);

/**
 * Number of nodes.
 *
 * # Safety
 * `f` must be a live handle and `out` valid for writes.
 */
FblabStatus fblab_field_len(const FblabField *f, size_t *out);

/**
 * Copies the nodal values into `buf`, which must hold at least the node count.
 *
 * # Safety
 * `f` must be a live handle and `buf` valid for `cap` writes.
 */
FblabStatus fblab_field_values(const FblabField *f, double *buf, size_t cap);

/**
 * Discrete energy `int |grad u|^2 + u^(-gamma) chi_{u>0}`, scaled by
 * `c_gamma` when `rescaled` is nonzero.
 *
 * # Safety
 * `f`, `p` must be live handles and `out` valid for writes.
 */
FblabStatus fblab_energy(const FblabField *f,
                         const FblabParams *p,
                         bool rescaled,
                         FblabEnergy *out);

/**
 * Minimizer on `[0, 1]` with `u(0) = left`, `u(1) = right`, default solver settings.
 *
 * # Safety
 * `p` must be a live handle and `out` valid for writes.
 */
FblabStatus fblab_minimize_1d(const FblabParams *p,
                              double left,
                              double right,
                              size_t cells,
                              bool rescaled,
                              FblabField **out);

/**
 * Flatness of a 2D field in the ball `B_radius(center)` against translates
 * of the one-dimensional profile.
 *
 * # Safety
 * `f`, `p` must be live handles and `out` valid for writes.
 */
FblabStatus fblab_flatness(const FblabField *f,
                           const FblabParams *p,
                           double center_x,
                           double center_y,
                           double radius,
                           FblabFlatness *out);

/**
 * Discrete viscosity test at a free-boundary point; `*passed` is true when
 * no comparison function touches the field.
 *
 * # Safety
 * `f`, `p` must be live handles and `passed` valid for writes.
 */
FblabStatus fblab_touch_test(const FblabField *f,
                             const FblabParams *p,
                             double x,
                             double y,
                             double mu,
                             double ball_radius,
                             FblabSide side,
                             bool *passed);

/**
 * Runs the closed-form oracle suite; reports passed and total counts.
 *
 * # Safety
 * `passed` and `total` must be valid for writes.
 */
FblabStatus fblab_validate(size_t *passed, size_t *total);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FBLAB_H */
