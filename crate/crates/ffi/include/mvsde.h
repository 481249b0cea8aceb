#ifndef MVSDE_H
#define MVSDE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MvsdeStatus {
  MVSDE_STATUS_OK = 0,
  MVSDE_STATUS_INVALID_ARGUMENT = 1,
  MVSDE_STATUS_NULL_POINTER = 2,
  MVSDE_STATUS_CONFIG = 3,
  MVSDE_STATUS_IMPLICIT_SOLVE = 4,
  MVSDE_STATUS_DIVERGED = 5,
  MVSDE_STATUS_MISSING_CONSTANTS = 6,
  MVSDE_STATUS_INFEASIBLE = 7,
  MVSDE_STATUS_BUFFER_TOO_SMALL = 8,
  MVSDE_STATUS_IO = 9,
  MVSDE_STATUS_PANIC = 10,
} MvsdeStatus;

/**
 * Opaque model handle.
 */
typedef struct MvsdeModel MvsdeModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *mvsde_last_error(void);

/**
 * Builds a model from a preset object such as `{"name": "opinion"}`.
 *
 * # Safety
 * `preset_json` must be a NUL-terminated string; `out` must be writable.
 */
enum MvsdeStatus mvsde_model_new(const char *preset_json, struct MvsdeModel **out);

/**
 * Releases a handle from [`mvsde_model_new`]; null is ignored.
 *
 * # Safety
 * `model` must come from [`mvsde_model_new`] and not be used afterwards.
 */
void mvsde_model_free(struct MvsdeModel *model);

/**
 * State dimension of the model.
 *
 * # Safety
 * `model` must be a live handle; `d` must be writable.
 */
enum MvsdeStatus mvsde_model_dimension(const struct MvsdeModel *model, size_t *d);

/**
 * Mean-square decay rate of the explicit scheme at step `dt`.
 *
 * # Safety
 * `theta` must be writable.
 */
enum MvsdeStatus mvsde_ms_rate(double dt,
                               double a1,
                               double a2,
                               double b1,
                               double b2,
                               double *theta);

/**
 * Almost-sure decay rate of the explicit scheme at step `dt`.
 *
 * # Safety
 * `xi` must be writable.
 */
enum MvsdeStatus mvsde_as_rate(double dt, double b1, double b2, double c1, double c2, double *xi);

/**
 * Mean-square decay rate of the backward scheme at step `dt`.
 *
 * # Safety
 * `beta` must be writable.
 */
enum MvsdeStatus mvsde_bem_rate(double dt,
                                double ct1,
                                double ct2,
                                double h1,
                                double h2,
                                double *beta);

/**
 * Wasserstein-2 distance between two clouds of `n` atoms in dimension `d`,
 * stored row-major.
 *
 * # Safety
 * `a` and `b` must each point to `n * d` doubles; `out` must be writable.
 */
enum MvsdeStatus mvsde_w2(const double *a, const double *b, size_t n, size_t d, double *out);

/**
 * Simulates `scheme_json` (a scheme object, e.g. `{"dt": 0.01, "steps": 300,
 * "n": 1000, "paths": 10, "seed": 1}`) and writes the path-averaged
 * mean-square series into `out`. `written` receives the series length,
 * which is `steps + 1` unless a path diverged; `diverged` is set to 0 or 1.
 * With a too small buffer nothing is written except `written`, and the
 * call returns `BufferTooSmall`.
 *
 * # Safety
 * `out` must point to `capacity` doubles; the other pointers must be valid.
 */
enum MvsdeStatus mvsde_simulate_mean_square(const struct MvsdeModel *model,
                                            const char *scheme_json,
                                            double *out,
                                            size_t capacity,
                                            size_t *written,
                                            int32_t *diverged);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MVSDE_H */
