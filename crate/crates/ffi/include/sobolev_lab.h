#ifndef SOBOLEV_LAB_H
#define SOBOLEV_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Proof path selector for [`sl_certificate_json`].
typedef enum SlProofPath {
  SL_PROOF_PATH_KNOTHE = 0,
  SL_PROOF_PATH_TRANSPORT = 1,
  SL_PROOF_PATH_ABP = 2,
} SlProofPath;

typedef enum SlStatus {
  SL_STATUS_OK = 0,
  SL_STATUS_NULL_POINTER = 1,
  SL_STATUS_INVALID_ARGUMENT = 2,
  SL_STATUS_UNKNOWN_NAME = 3,
  SL_STATUS_UNSUPPORTED = 4,
  SL_STATUS_NUMERICAL = 5,
  SL_STATUS_NOT_MINIMAL = 6,
  SL_STATUS_IO = 7,
  SL_STATUS_PANIC = 8,
} SlStatus;

// Positive scalar field on a grid.
typedef struct SlField SlField;

// Ball grid of spacing `h` in dimension 2 or 3.
typedef struct SlGrid SlGrid;

// Parametric surface patch.
typedef struct SlSurface SlSurface;

typedef struct SlSobolevDeficit {
  double lhs;
  double rhs;
  double deficit;
  double relative_deficit;
  // Nonzero when the deficit is within the discretization allowance.
  uint8_t pass;
} SlSobolevDeficit;

typedef struct SlSurfaceTerms {
  double gradient_curvature;
  double boundary;
  double l2_squared;
  double lhs;
  double rhs;
  double deficit;
  double area;
} SlSurfaceTerms;

typedef struct SlDensity {
  double c;
  double alpha;
  double pi_over_c;
} SlDensity;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call on the same thread.
const char *sl_last_error(void);

// # Safety
// `out` must be writable.
enum SlStatus sl_grid_new(size_t n, double h, struct SlGrid **out);

// Number of active nodes, the length expected by [`sl_field_from_values`].
//
// # Safety
// `grid` is null or a live grid handle.
size_t sl_grid_active_len(const struct SlGrid *grid);

// # Safety
// `grid` is null or was returned by [`sl_grid_new`] and not yet freed.
void sl_grid_free(struct SlGrid *grid);

// Builtin corpus function by name (`const1`, `bump1`, `gauss`, ...).
//
// # Safety
// `grid` is a live grid, `name` a NUL-terminated string, `out` writable.
enum SlStatus sl_field_builtin(const struct SlGrid *grid, const char *name, struct SlField **out);

// Field from values at the active nodes, in ascending box-index order.
//
// # Safety
// `values` points to `len` readable doubles; `grid` is live; `out` writable.
enum SlStatus sl_field_from_values(const struct SlGrid *grid,
                                   const double *values,
                                   size_t len,
                                   struct SlField **out);

// # Safety
// `field` is null or a live field handle not yet freed.
void sl_field_free(struct SlField *field);

// Grid deficit `∫_∂B f + ∫|∇f| - n|B|^{1/n} ‖f‖_{n/(n-1)}`.
//
// # Safety
// `field` is live and `out` writable.
enum SlStatus sl_sobolev_deficit(const struct SlField *field, struct SlSobolevDeficit *out);

// Certificate JSON for one proof path. Free the string with
// [`sl_string_free`].
//
// # Safety
// `field` is live; `out` writable.
enum SlStatus sl_certificate_json(const struct SlField *field,
                                  enum SlProofPath path,
                                  uint64_t seed,
                                  double tol_scale,
                                  char **out);

// # Safety
// `s` is null or was returned by this library and not yet freed.
void sl_string_free(char *s);

// Named surface patch. Pass NaN for `r` or `h_band` to use the default.
//
// # Safety
// `name` is a NUL-terminated string; `out` writable.
enum SlStatus sl_surface_new(const char *name, double r, double h_band, struct SlSurface **out);

// # Safety
// `surface` is null or a live surface handle not yet freed.
void sl_surface_free(struct SlSurface *surface);

// Both sides of `∫_Σ √(|∇^Σ f|² + f²H²) + ∫_∂Σ f ≥ 2√π (∫_Σ f²)^{1/2}`
// for a named surface field (`const1`, `bump`, `aniso`, ...).
//
// # Safety
// `surface` is live, `field` a NUL-terminated string, `out` writable.
enum SlStatus sl_surface_deficit(const struct SlSurface *surface,
                                 const char *field,
                                 struct SlSurfaceTerms *out);

// Constants of the planar density family `ρ_j`.
//
// # Safety
// `out` writable.
enum SlStatus sl_density(uint64_t j, struct SlDensity *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOBOLEV_LAB_H */
