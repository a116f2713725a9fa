#ifndef KEDMD_H
#define KEDMD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum kedmd_status {
  KEDMD_STATUS_OK = 0,
  KEDMD_STATUS_NULL_POINTER = 1,
  KEDMD_STATUS_INVALID_INPUT = 2,
  KEDMD_STATUS_CONFIG = 3,
  KEDMD_STATUS_FACTORIZATION = 4,
  KEDMD_STATUS_INTEGRATION = 5,
  KEDMD_STATUS_RESOURCE = 6,
  KEDMD_STATUS_OUT_OF_SCOPE = 7,
  KEDMD_STATUS_STATE = 8,
  KEDMD_STATUS_IO = 9,
  KEDMD_STATUS_PANIC = 10,
} kedmd_status;

// Flow map handle (RK4 time-`dt` map of a benchmark system).
typedef struct kedmd_flow kedmd_flow;

// Wendland kernel handle.
typedef struct kedmd_kernel kedmd_kernel;

// Koopman model handle (factorized kernel matrix plus flow samples).
typedef struct kedmd_model kedmd_model;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next call into this library on the same thread.
const char *kedmd_last_error_message(void);

// Creates the Wendland kernel `phi_{d,k}` with support radius `scale`.
//
// # Safety
// `out` must be a valid pointer.
enum kedmd_status kedmd_kernel_new(size_t d, size_t k, double scale, struct kedmd_kernel **out);

// Evaluates `k(x, z)` for two `d`-vectors.
//
// # Safety
// `x` and `z` must point to `d` values, `out` to one.
enum kedmd_status kedmd_kernel_eval(const struct kedmd_kernel *kernel,
                                    const double *x,
                                    const double *z,
                                    double *out);

// # Safety
// `kernel` must come from [`kedmd_kernel_new`] and not be used afterwards.
void kedmd_kernel_free(struct kedmd_kernel *kernel);

// Creates the time-`dt` RK4 flow map of `system` (`"duffing"`, `"lorenz"`
// with the standard parameters, or `"identity"`). `dim` is only used by
// `"identity"`.
//
// # Safety
// `system` must be a NUL-terminated string and `out` a valid pointer.
enum kedmd_status kedmd_flow_new(const char *system,
                                 size_t dim,
                                 double dt,
                                 size_t substeps,
                                 struct kedmd_flow **out);

// State dimension, or 0 for a null handle.
//
// # Safety
// `flow` must be null or a live handle.
size_t kedmd_flow_dim(const struct kedmd_flow *flow);

// Maps `n` points (`n x dim`, row-major) one time step forward into `out`.
//
// # Safety
// `x` and `out` must each hold `n * dim` values.
enum kedmd_status kedmd_flow_apply(const struct kedmd_flow *flow,
                                   const double *x,
                                   size_t n,
                                   double *out);

// # Safety
// `flow` must come from [`kedmd_flow_new`] and not be used afterwards.
void kedmd_flow_free(struct kedmd_flow *flow);

// Builds a model from `n` centers `x` and their flow images `images`
// (both `n x d`, where `d` is the kernel dimension).
//
// # Safety
// `x` and `images` must each hold `n * d` values; `out` must be valid.
enum kedmd_status kedmd_model_build(const struct kedmd_kernel *kernel,
                                    const double *x,
                                    const double *images,
                                    size_t n,
                                    struct kedmd_model **out);

// Number of centers, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t kedmd_model_len(const struct kedmd_model *model);

// Canonical coefficients of the `steps`-step prediction of an observable
// from its values `f_images` at the flow images. Writes `n` values.
//
// # Safety
// `f_images` and `alpha` must each hold `n` values.
enum kedmd_status kedmd_model_coefficients(const struct kedmd_model *model,
                                           const double *f_images,
                                           size_t steps,
                                           double *alpha);

// Predicts the observable after `steps` flow steps at `m` points `z`
// (`m x d`), given its values `f_images` at the flow images.
//
// # Safety
// `f_images` must hold `n` values, `z` `m * d` values and `out` `m` values.
enum kedmd_status kedmd_model_predict(const struct kedmd_model *model,
                                      const double *f_images,
                                      size_t steps,
                                      const double *z,
                                      size_t m,
                                      double *out);

// # Safety
// `model` must come from [`kedmd_model_build`] and not be used afterwards.
void kedmd_model_free(struct kedmd_model *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KEDMD_H */
