//! C ABI for the quasi-Newton trust-region kernel.
//!
//! The surface is a single opaque solver handle holding the curvature-pair
//! history and the compact operator. Callers feed observed (s, y) pairs and
//! request trust-region steps for a gradient and radius; the radius
//! schedule is exposed as a pure helper. All functions are
//! panic-isolated: a caught panic reports `QNTR_STATUS_NUMERICAL_FAILURE`
//! instead of unwinding across the boundary.

use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use qntr::hessian::QnKind;
use qntr::pairs::{BFGS_CURVATURE_TAU, SR1_SKIP_TAU};
use qntr::subproblem::{adjust_radius, TrustRegionState};
use qntr::train::QnState;

/// Quasi-Newton update family.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum QntrKind {
    QntrKindBfgs = 0,
    QntrKindSr1 = 1,
}

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum QntrStatus {
    QntrStatusOk = 0,
    QntrStatusNullArgument = 1,
    QntrStatusInvalidArgument = 2,
    QntrStatusNumericalFailure = 3,
}

/// Opaque solver state: pair history, seed scalar, compact operator.
pub struct QntrSolver {
    state: QnState,
    dim: usize,
}

/// Creates a solver for `dim`-dimensional problems keeping up to `memory`
/// curvature pairs. `gamma0` seeds the initial operator (pass 1.0 for the
/// standard start). A `tau` of 0 selects the per-family default pair
/// threshold (1e-2 for BFGS, 1e-8 for SR1). Returns null on invalid
/// arguments.
#[no_mangle]
pub extern "C" fn qntr_solver_new(
    kind: QntrKind,
    dim: usize,
    memory: usize,
    gamma0: f64,
    tau: f64,
) -> *mut QntrSolver {
    if dim == 0 || memory == 0 || !gamma0.is_finite() || gamma0 == 0.0 || tau < 0.0 {
        return std::ptr::null_mut();
    }
    let qn_kind = match kind {
        QntrKind::QntrKindBfgs => QnKind::Bfgs,
        QntrKind::QntrKindSr1 => QnKind::Sr1,
    };
    if qn_kind == QnKind::Bfgs && gamma0 < 0.0 {
        return std::ptr::null_mut();
    }
    let tau = if tau == 0.0 {
        match qn_kind {
            QnKind::Bfgs => BFGS_CURVATURE_TAU,
            QnKind::Sr1 => SR1_SKIP_TAU,
        }
    } else {
        tau
    };
    let state = QnState::new(qn_kind, dim, memory, gamma0, tau);
    Box::into_raw(Box::new(QntrSolver { state, dim }))
}

/// Releases a solver created by `qntr_solver_new`. Null is a no-op.
#[no_mangle]
pub extern "C" fn qntr_solver_free(solver: *mut QntrSolver) {
    if !solver.is_null() {
        drop(unsafe { Box::from_raw(solver) });
    }
}

/// Offers a curvature pair (s, y) of length `len` to the solver. On
/// return, `stored_out` (optional) reports whether the pair passed the
/// family's skip rule and was stored.
///
/// # Safety
/// `s` and `y` must point to `len` readable doubles; `solver` must be a
/// live handle from `qntr_solver_new`.
#[no_mangle]
pub unsafe extern "C" fn qntr_solver_observe(
    solver: *mut QntrSolver,
    s: *const f64,
    y: *const f64,
    len: usize,
    stored_out: *mut bool,
) -> QntrStatus {
    if solver.is_null() || s.is_null() || y.is_null() {
        return QntrStatus::QntrStatusNullArgument;
    }
    let handle = &mut *solver;
    if len != handle.dim {
        return QntrStatus::QntrStatusInvalidArgument;
    }
    let s = slice::from_raw_parts(s, len);
    let y = slice::from_raw_parts(y, len);
    match catch_unwind(AssertUnwindSafe(|| handle.state.observe(s, y))) {
        Ok(Ok(stored)) => {
            if !stored_out.is_null() {
                *stored_out = stored;
            }
            QntrStatus::QntrStatusOk
        }
        Ok(Err(_)) | Err(_) => QntrStatus::QntrStatusNumericalFailure,
    }
}

/// Solves the trust-region subproblem for gradient `g` and radius `delta`,
/// writing the step into `p_out` (length `len`). `sigma_out`, `q_out`, and
/// `hard_case_out` are optional.
///
/// # Safety
/// `g` must point to `len` readable doubles and `p_out` to `len` writable
/// doubles; `solver` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qntr_solver_solve(
    solver: *mut QntrSolver,
    g: *const f64,
    len: usize,
    delta: f64,
    p_out: *mut f64,
    sigma_out: *mut f64,
    q_out: *mut f64,
    hard_case_out: *mut bool,
) -> QntrStatus {
    if solver.is_null() || g.is_null() || p_out.is_null() {
        return QntrStatus::QntrStatusNullArgument;
    }
    let handle = &mut *solver;
    if len != handle.dim || !(delta > 0.0) || !delta.is_finite() {
        return QntrStatus::QntrStatusInvalidArgument;
    }
    let g = slice::from_raw_parts(g, len);
    match catch_unwind(AssertUnwindSafe(|| handle.state.solve(g, delta))) {
        Ok(Ok(sol)) => {
            let out = slice::from_raw_parts_mut(p_out, len);
            out.copy_from_slice(&sol.p);
            if !sigma_out.is_null() {
                *sigma_out = sol.sigma;
            }
            if !q_out.is_null() {
                *q_out = sol.q_value;
            }
            if !hard_case_out.is_null() {
                *hard_case_out = sol.hard_case;
            }
            QntrStatus::QntrStatusOk
        }
        Ok(Err(_)) | Err(_) => QntrStatus::QntrStatusNumericalFailure,
    }
}

/// Number of curvature pairs currently stored.
#[no_mangle]
pub extern "C" fn qntr_solver_pairs(solver: *const QntrSolver) -> usize {
    if solver.is_null() {
        return 0;
    }
    unsafe { (*solver).state.pairs_stored() }
}

/// Current seed scalar of the operator.
#[no_mangle]
pub extern "C" fn qntr_solver_gamma(solver: *const QntrSolver) -> f64 {
    if solver.is_null() {
        return f64::NAN;
    }
    unsafe { (*solver).state.gamma() }
}

/// Standard radius schedule: returns the next radius given the reduction
/// ratio `rho` and the norm of the taken step.
#[no_mangle]
pub extern "C" fn qntr_radius_update(delta: f64, rho: f64, step_norm: f64) -> f64 {
    if !(delta > 0.0) {
        return f64::NAN;
    }
    let st = TrustRegionState { delta, ..TrustRegionState::default() };
    adjust_radius(&st, rho, step_norm).delta
}

const VERSION: &[u8] = concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes();

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qntr_version() -> *const c_char {
    VERSION.as_ptr() as *const c_char
}
