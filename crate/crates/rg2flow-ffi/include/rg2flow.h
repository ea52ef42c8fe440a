#ifndef RG2FLOW_H
#define RG2FLOW_H

/* Generated by cbindgen from the rg2flow-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum Rg2Status {
  Rg2Status_Ok = 0,
  /**
   * A pointer argument was null or a scalar argument out of range.
   */
  Rg2Status_InvalidArgument = 1,
  /**
   * The geometry description violates the class invariants.
   */
  Rg2Status_InvalidGeometry = 2,
  /**
   * The weak-parabolicity condition fails for the requested coupling.
   */
  Rg2Status_NotParabolic = 3,
  /**
   * A linear or eigenvalue solver did not converge.
   */
  Rg2Status_SolverFailure = 4,
  /**
   * The operation is outside the symmetry-reduced representation.
   */
  Rg2Status_Unsupported = 5,
  /**
   * Filesystem failure while writing artifacts.
   */
  Rg2Status_Io = 6,
  /**
   * The scenario ran but at least one verification failed.
   */
  Rg2Status_VerificationFailed = 7,
  /**
   * Any other failure; see the error message.
   */
  Rg2Status_Internal = 8,
} Rg2Status;

/**
 * Opaque geometry handle.
 */
typedef struct Rg2Geometry Rg2Geometry;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the most recent error message of this thread into `buf` (always
 * NUL-terminated when `len > 0`) and returns the full message length in
 * bytes, excluding the terminator. Pass a null `buf` to query the length.
 *
 * # Safety
 * `buf` must either be null or point to at least `len` writable bytes.
 */
uintptr_t rg2_last_error_message(char *buf, uintptr_t len);

/**
 * Creates a constant-curvature geometry `g = scale * g0` with `g0` the
 * model of sectional curvature `curvature` in dimension `dim`.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum Rg2Status rg2_geometry_constant_curvature(uint32_t dim,
                                               double curvature,
                                               double scale,
                                               struct Rg2Geometry **out);

/**
 * Creates a homogeneous 3-geometry from Milnor-frame structure constants
 * and diagonal metric coefficients (three values each).
 *
 * # Safety
 * `structure` and `coefficients` must point to three readable doubles;
 * `out` must be valid.
 */
enum Rg2Status rg2_geometry_homogeneous3(const double *structure,
                                         const double *coefficients,
                                         struct Rg2Geometry **out);

/**
 * Creates a warped 2-torus `rho(r)^2 dr^2 + phi(r)^2 dtheta^2` from `n`
 * periodic profile samples on a grid of domain length `length`.
 *
 * # Safety
 * `rho` and `phi` must point to `n` readable doubles; `out` must be valid.
 */
enum Rg2Status rg2_geometry_warped_torus(uintptr_t n,
                                         double length,
                                         const double *rho,
                                         const double *phi,
                                         struct Rg2Geometry **out);

/**
 * Releases a geometry handle. Null is a no-op.
 *
 * # Safety
 * `g` must be a handle returned by one of the constructors, not yet freed.
 */
void rg2_geometry_free(struct Rg2Geometry *g);

/**
 * Writes the Riemannian volume of the geometry.
 *
 * # Safety
 * `g` must be a live handle; `out` must be writable.
 */
enum Rg2Status rg2_geometry_volume(const struct Rg2Geometry *g, double *out);

/**
 * Writes the scalar-curvature range `[r_min, r_max]` of the geometry.
 *
 * # Safety
 * `g` must be a live handle; the outputs must be writable.
 */
enum Rg2Status rg2_geometry_scalar_range(const struct Rg2Geometry *g,
                                         double *out_min,
                                         double *out_max);

/**
 * Creates the rescaled geometry `lambda * g` as a new handle.
 *
 * # Safety
 * `g` must be a live handle; `out` must be valid.
 */
enum Rg2Status rg2_geometry_rescale(const struct Rg2Geometry *g,
                                    double lambda,
                                    struct Rg2Geometry **out);

/**
 * Writes `alpha_g` of the geometry equipped with the constant density
 * exponent `f_const`.
 *
 * # Safety
 * `g` must be a live handle; `out` must be writable.
 */
enum Rg2Status rg2_alpha_g(const struct Rg2Geometry *g, double f_const, double *out);

/**
 * Writes the weak-parabolicity margin `min(1 + alpha K)` over the
 * sectional range.
 *
 * # Safety
 * `g` must be a live handle; `out` must be writable.
 */
enum Rg2Status rg2_parabolicity_margin(const struct Rg2Geometry *g, double alpha, double *out);

/**
 * Integrates the fixed-coupling flow from the geometry with a constant
 * density exponent and writes the final metric coefficients into
 * `coeffs_out` (length `coeffs_len`, the class coefficient count:
 * 1, 3, or `2n`). Returns the number of coefficients written through
 * `written`.
 *
 * # Safety
 * `g` must be a live handle; `coeffs_out` must hold `coeffs_len` doubles;
 * `written` must be writable.
 */
enum Rg2Status rg2_flow_run_plain(const struct Rg2Geometry *g,
                                  double alpha,
                                  double f_const,
                                  double dt,
                                  uintptr_t steps,
                                  double *coeffs_out,
                                  uintptr_t coeffs_len,
                                  uintptr_t *written);

/**
 * Writes the scaling factor of the constant-curvature solution at flow
 * time `t` from the implicit branch relation through `sigma(0) = 1`.
 *
 * # Safety
 * `out` must be writable.
 */
enum Rg2Status rg2_implicit_sigma(double t,
                                  double curvature,
                                  uint32_t dim,
                                  double alpha,
                                  double *out);

/**
 * Solves the coupled constrained eigenvalue problem and writes the
 * functional value and its two eigenvalues.
 *
 * # Safety
 * `g` must be a live handle; the outputs must be writable.
 */
enum Rg2Status rg2_capital_lambda(const struct Rg2Geometry *g,
                                  double alpha,
                                  double *out_lambda,
                                  double *out_lambda1,
                                  double *out_lambda2);

/**
 * Parses a scenario config from a UTF-8 TOML string, runs it, and writes
 * the artifact set into `out_dir`. Returns `Ok` when every toggled
 * verification passed and `VerificationFailed` otherwise.
 *
 * # Safety
 * `config_toml` and `out_dir` must be NUL-terminated UTF-8 strings.
 */
enum Rg2Status rg2_run_scenario_toml(const char *config_toml, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RG2FLOW_H */
