/* C interface for the qntr quasi-Newton trust-region kernel. */

#ifndef QNTR_H
#define QNTR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Quasi-Newton update family.
 */
typedef enum QntrKind {
  QntrKindBfgs = 0,
  QntrKindSr1 = 1,
} QntrKind;

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum QntrStatus {
  QntrStatusOk = 0,
  QntrStatusNullArgument = 1,
  QntrStatusInvalidArgument = 2,
  QntrStatusNumericalFailure = 3,
} QntrStatus;

/**
 * Opaque solver state: pair history, seed scalar, compact operator.
 */
typedef struct QntrSolver QntrSolver;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a solver for `dim`-dimensional problems keeping up to `memory`
 * curvature pairs. `gamma0` seeds the initial operator (pass 1.0 for the
 * standard start). A `tau` of 0 selects the per-family default pair
 * threshold (1e-2 for BFGS, 1e-8 for SR1). Returns null on invalid
 * arguments.
 */
struct QntrSolver *qntr_solver_new(enum QntrKind kind,
                                   uintptr_t dim,
                                   uintptr_t memory,
                                   double gamma0,
                                   double tau);

/**
 * Releases a solver created by `qntr_solver_new`. Null is a no-op.
 */
void qntr_solver_free(struct QntrSolver *solver);

/**
 * Offers a curvature pair (s, y) of length `len` to the solver. On
 * return, `stored_out` (optional) reports whether the pair passed the
 * family's skip rule and was stored.
 *
 * # Safety
 * `s` and `y` must point to `len` readable doubles; `solver` must be a
 * live handle from `qntr_solver_new`.
 */
enum QntrStatus qntr_solver_observe(struct QntrSolver *solver,
                                    const double *s,
                                    const double *y,
                                    uintptr_t len,
                                    bool *stored_out);

/**
 * Solves the trust-region subproblem for gradient `g` and radius `delta`,
 * writing the step into `p_out` (length `len`). `sigma_out`, `q_out`, and
 * `hard_case_out` are optional.
 *
 * # Safety
 * `g` must point to `len` readable doubles and `p_out` to `len` writable
 * doubles; `solver` must be a live handle.
 */
enum QntrStatus qntr_solver_solve(struct QntrSolver *solver,
                                  const double *g,
                                  uintptr_t len,
                                  double delta,
                                  double *p_out,
                                  double *sigma_out,
                                  double *q_out,
                                  bool *hard_case_out);

/**
 * Number of curvature pairs currently stored.
 */
uintptr_t qntr_solver_pairs(const struct QntrSolver *solver);

/**
 * Current seed scalar of the operator.
 */
double qntr_solver_gamma(const struct QntrSolver *solver);

/**
 * Standard radius schedule: returns the next radius given the reduction
 * ratio `rho` and the norm of the taken step.
 */
double qntr_radius_update(double delta, double rho, double step_norm);

/**
 * Library version as a static NUL-terminated string.
 */
const char *qntr_version(void);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* QNTR_H */
