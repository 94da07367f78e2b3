#ifndef WEI_NORMAN_H
#define WEI_NORMAN_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Euler step used when [`WnMethod::Euler`] is requested.
 */
#define WN_EULER_DT 1e-4

typedef enum WnStatus {
  WN_STATUS_OK = 0,
  WN_STATUS_NULL_POINTER = 1,
  WN_STATUS_INVALID_ARGUMENT = 2,
  WN_STATUS_BUFFER_TOO_SMALL = 3,
  WN_STATUS_SOLVER_FAILURE = 4,
  WN_STATUS_PANIC = 5,
} WnStatus;

typedef enum WnMethod {
  /**
   * Product of matrix exponentials.
   */
  WN_METHOD_WEI_NORMAN = 0,
  /**
   * Adaptive Dormand-Prince integration.
   */
  WN_METHOD_RK45 = 1,
  /**
   * Fixed-step Euler with step [`WN_EULER_DT`].
   */
  WN_METHOD_EULER = 2,
  /**
   * Closed form; not available for the pure-birth model.
   */
  WN_METHOD_ORACLE = 3,
} WnMethod;

/**
 * A model with its generators assembled, ready to solve.
 */
typedef struct WnModel WnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Birth-death process with birth rate `b(t)` and per-capita death rate
 * `d(t)`, tracking counts 0 through `n_max - 2` plus an overflow state.
 *
 * # Safety
 * `b` and `d` must be NUL-terminated strings and `out` must be valid for
 * writing one pointer.
 */
enum WnStatus wn_model_birth_death(const char *b,
                                   const char *d,
                                   size_t n_max,
                                   struct WnModel **out);

/**
 * Cohort of `n` individuals with force of infection `lambda(t)` and
 * recovery rate `gamma(t)`, starting fully susceptible.
 *
 * # Safety
 * As for [`wn_model_birth_death`].
 */
enum WnStatus wn_model_sir_cohort(const char *lambda,
                                  const char *gamma,
                                  size_t n,
                                  struct WnModel **out);

/**
 * Pure birth process with immigration rate `a(t)` and per-capita birth rate
 * `b(t)`, tracking counts 0 through `m` plus an overflow state, starting
 * empty.
 *
 * # Safety
 * As for [`wn_model_birth_death`].
 */
enum WnStatus wn_model_pure_birth(const char *a, const char *b, size_t m, struct WnModel **out);

/**
 * Releases a model. NULL is ignored.
 *
 * # Safety
 * `model` must be NULL or a handle from a `wn_model_*` constructor that has
 * not been freed.
 */
void wn_model_free(struct WnModel *model);

/**
 * Number of states, i.e. the length of every distribution.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writing.
 */
enum WnStatus wn_model_dim(const struct WnModel *model, size_t *out);

/**
 * Distribution at time `t` by `method`, written to `out[0..len]`. `len`
 * must be at least [`wn_model_dim`]; only that many entries are written.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writing `len` doubles.
 */
enum WnStatus wn_solve(const struct WnModel *model,
                       enum WnMethod method,
                       double t,
                       double *out,
                       size_t len);

/**
 * Checks the model's algebraic identities; `*passed` is 1 when all hold.
 *
 * # Safety
 * `model` must be a live handle and `passed` valid for writing.
 */
enum WnStatus wn_verify(const struct WnModel *model, bool *passed);

/**
 * Message describing the last failure on this thread, or NULL. The pointer
 * stays valid until the next `wn_*` call on the same thread.
 */
const char *wn_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WEI_NORMAN_H */
