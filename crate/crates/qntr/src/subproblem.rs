//! Exact trust-region subproblem solver for compact quasi-Newton operators.
//!
//! The subproblem min ½pᵀBp + gᵀp subject to ‖p‖ ≤ δ is solved through a
//! spectral decomposition of the small core matrix R·M·Rᵀ obtained from a
//! thin QR factorization of Ψ. The eigenvalues of B are the shifted core
//! eigenvalues plus γ with multiplicity n − m, and ‖p(σ)‖ is evaluated from
//! the projected gradient without ever forming p. Boundary multipliers come
//! from a safeguarded Newton iteration on φ(σ) = 1/‖p(σ)‖ − 1/δ; the SR1
//! path also covers the pseudo-inverse and hard-case branches where B + σI
//! is singular at the optimal shift.

use thiserror::Error;

use crate::hessian::{CompactHessian, HessianError, QnKind};
use crate::linalg::{self, dot, norm, LinalgError, SmallMatrix};

/// Absolute convergence tolerance on φ at the boundary root.
const PHI_TOL: f64 = 1e-10;
/// Newton iteration budget for the boundary root.
const MAX_ROOT_ITERS: usize = 100;
/// Hard floor below which a denominator counts as a pole hit.
const POLE_DEN_TOL: f64 = 1e-300;
/// Relative width of the eigenvalue cluster treated as the leftmost
/// eigenspace.
const CLUSTER_REL_TOL: f64 = 1e-9;
/// Relative size under which a projected gradient component counts as
/// absent from an eigenspace.
const ABSENT_G_REL_TOL: f64 = 1e-8;
/// Minimum norm accepted for a projected canonical basis vector when
/// searching for a leftmost eigenvector.
const UMIN_PROJECTION_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolverError {
    #[error("denominator hit a pole in the spectral norm evaluation")]
    PoleHit,
    #[error("boundary root search exceeded {MAX_ROOT_ITERS} iterations")]
    MaxIterations,
    #[error("shift gamma + sigma is zero; pseudo-inverse path required")]
    SingularShift,
    #[error("no canonical basis vector projected onto the leftmost eigenspace")]
    HardCaseEigenvectorNotFound,
    #[error("predicted reduction is zero")]
    ZeroPrediction,
    #[error(transparent)]
    Hessian(#[from] HessianError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Spectral view of a compact operator for one gradient.
///
/// `lambda1` holds the eigenvalues of B restricted to the column space of Ψ
/// in ascending order; the remaining n − m eigenvalues all equal `gamma`.
/// `g_par` is the gradient projected onto that column space and
/// `g_perp_norm` the norm of the complementary part.
#[derive(Debug, Clone)]
pub struct SpectralFactors {
    pub lambda1: Vec<f64>,
    pub gamma: f64,
    pub r_inv: SmallMatrix,
    pub u: SmallMatrix,
    pub g_par: Vec<f64>,
    pub g_perp_norm: f64,
    /// Multiplicity of γ in the spectrum, n − m. Zero means the factor
    /// spans the whole space and γ is not an eigenvalue of B at all.
    pub gamma_multiplicity: usize,
}

impl SpectralFactors {
    /// Smallest eigenvalue of B: the leftmost factor eigenvalue, or γ when
    /// the γ-eigenspace is nonempty.
    pub fn lambda_min(&self) -> f64 {
        let head = self.lambda1.first().copied();
        if self.gamma_multiplicity > 0 {
            head.map_or(self.gamma, |h| h.min(self.gamma))
        } else {
            head.expect("factor eigenvalues exist when gamma multiplicity is zero")
        }
    }
}

/// Solution of one trust-region subproblem.
#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub p: Vec<f64>,
    pub sigma: f64,
    pub q_value: f64,
    pub on_boundary: bool,
    pub hard_case: bool,
}

/// Trust-region radius plus the acceptance and adjustment thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegionState {
    pub delta: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub eta4: f64,
}

impl TrustRegionState {
    pub fn new(delta: f64) -> Self {
        assert!(delta > 0.0, "radius must be positive");
        Self { delta, tau1: 1e-4, tau2: 0.1, tau3: 0.75, eta2: 0.5, eta3: 0.8, eta4: 2.0 }
    }
}

impl Default for TrustRegionState {
    fn default() -> Self {
        Self::new(1.0)
    }
}

/// Computes the spectral factors of B for gradient g. For an empty factor
/// the parallel part is empty and the perpendicular norm is ‖g‖.
pub fn spectral_factors(b: &CompactHessian, g: &[f64]) -> Result<SpectralFactors, SolverError> {
    assert_eq!(g.len(), b.dim(), "dimension mismatch");
    if b.psi().is_empty() {
        return Ok(SpectralFactors {
            lambda1: Vec::new(),
            gamma: b.gamma(),
            r_inv: SmallMatrix::zeros(0, 0),
            u: SmallMatrix::zeros(0, 0),
            g_par: Vec::new(),
            g_perp_norm: norm(g),
            gamma_multiplicity: b.dim(),
        });
    }
    let (_, r) = linalg::thin_qr(b.psi())?;
    let r_inv = linalg::invert_upper_triangular(&r)?;
    // core = R·M·Rᵀ with M = (M⁻¹)⁻¹, via one small solve
    let x = linalg::solve_small_multi(b.minv(), &r.transpose()).map_err(|e| match e {
        LinalgError::Singular => SolverError::Hessian(HessianError::SingularMiddle),
        other => SolverError::Linalg(other),
    })?;
    let mut core = r.matmul(&x);
    core.symmetrize();
    let (u, lam_hat) = linalg::sym_eig(&core)?;
    let lambda1: Vec<f64> = lam_hat.iter().map(|l| l + b.gamma()).collect();
    // g_par = Uᵀ R⁻ᵀ Ψᵀ g
    let t = b.psi().matvec_t(g);
    let z = r_inv.matvec_t(&t);
    let g_par = u.matvec_t(&z);
    let gg = dot(g, g);
    let gamma_multiplicity = b.dim() - lambda1.len();
    // a full-span factor has no perpendicular component by construction
    let g_perp_norm = if gamma_multiplicity == 0 {
        0.0
    } else {
        (gg - dot(&g_par, &g_par)).max(0.0).sqrt()
    };
    Ok(SpectralFactors { lambda1, gamma: b.gamma(), r_inv, u, g_par, g_perp_norm, gamma_multiplicity })
}

/// Evaluates ‖p(σ)‖ from the spectral factors without forming p. Terms with
/// an exactly zero numerator are skipped; any remaining denominator smaller
/// than 1e-300 in magnitude is a pole hit.
pub fn p_norm(sigma: f64, f: &SpectralFactors) -> Result<f64, SolverError> {
    let mut sum = 0.0;
    for (lam, gp) in f.lambda1.iter().zip(&f.g_par) {
        if *gp == 0.0 {
            continue;
        }
        let den = lam + sigma;
        if den.abs() < POLE_DEN_TOL {
            return Err(SolverError::PoleHit);
        }
        sum += (gp / den) * (gp / den);
    }
    if f.g_perp_norm != 0.0 {
        let den = f.gamma + sigma;
        if den.abs() < POLE_DEN_TOL {
            return Err(SolverError::PoleHit);
        }
        sum += (f.g_perp_norm / den) * (f.g_perp_norm / den);
    }
    Ok(sum.sqrt())
}

fn full_g_norm(f: &SpectralFactors) -> f64 {
    (dot(&f.g_par, &f.g_par) + f.g_perp_norm * f.g_perp_norm).sqrt()
}

fn spectrum_scale(f: &SpectralFactors) -> f64 {
    let mut s = f.gamma.abs();
    for l in &f.lambda1 {
        s = s.max(l.abs());
    }
    s.max(1.0)
}

/// ‖p(σ)‖² treating components below `num_tol` as absent and returning
/// infinity when a live component sits on a denominator below `den_tol`.
fn norm_sq_with_limits(f: &SpectralFactors, sigma: f64, num_tol: f64, den_tol: f64) -> f64 {
    let mut sum = 0.0;
    for (lam, gp) in f.lambda1.iter().zip(&f.g_par) {
        if gp.abs() <= num_tol {
            continue;
        }
        let den = lam + sigma;
        if den.abs() <= den_tol {
            return f64::INFINITY;
        }
        sum += (gp / den) * (gp / den);
    }
    if f.g_perp_norm > num_tol {
        let den = f.gamma + sigma;
        if den.abs() <= den_tol {
            return f64::INFINITY;
        }
        sum += (f.g_perp_norm / den) * (f.g_perp_norm / den);
    }
    sum
}

/// Finds the boundary multiplier σ* > max{0, −λ_min} with φ(σ*) = 0 by a
/// Newton iteration safeguarded with a shrinking bisection bracket.
pub fn solve_sigma(f: &SpectralFactors, delta: f64) -> Result<f64, SolverError> {
    assert!(delta > 0.0);
    let lambda_min = f.lambda_min();
    let gnorm = full_g_norm(f);
    let mut lo = 0.0_f64.max(-lambda_min) + 1e-10 * (1.0 + lambda_min.abs());
    let mut hi = lo + gnorm / delta + lambda_min.abs() + 1.0;
    let phi = |sigma: f64| -> f64 {
        let nsq = norm_sq_with_limits(f, sigma, 0.0, 0.0);
        if nsq == 0.0 {
            return f64::INFINITY;
        }
        if nsq.is_infinite() {
            return -1.0 / delta;
        }
        1.0 / nsq.sqrt() - 1.0 / delta
    };
    if phi(lo) >= 0.0 {
        // root collapsed onto the left end of the bracket
        return Ok(lo);
    }
    let mut sigma = lo;
    for _ in 0..MAX_ROOT_ITERS {
        let nsq = norm_sq_with_limits(f, sigma, 0.0, 0.0);
        let pn = nsq.sqrt();
        let phival = if pn == 0.0 { f64::INFINITY } else { 1.0 / pn - 1.0 / delta };
        if phival.abs() <= PHI_TOL {
            return Ok(sigma);
        }
        if phival < 0.0 {
            lo = sigma;
        } else {
            hi = sigma;
        }
        // the bracket can collapse to adjacent floats before |φ| clears an
        // absolute tolerance when 1/δ is huge; the midpoint is then the
        // best representable root
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            return Ok(0.5 * (lo + hi));
        }
        // d(1/‖p‖)/dσ, positive on the search interval
        let mut deriv_num = 0.0;
        for (lam, gp) in f.lambda1.iter().zip(&f.g_par) {
            if *gp == 0.0 {
                continue;
            }
            let den = lam + sigma;
            deriv_num += gp * gp / (den * den * den);
        }
        if f.g_perp_norm != 0.0 {
            let den = f.gamma + sigma;
            deriv_num += f.g_perp_norm * f.g_perp_norm / (den * den * den);
        }
        let dphi = deriv_num / (pn * pn * pn);
        let newton = sigma - phival / dphi;
        sigma = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    Err(SolverError::MaxIterations)
}

/// Computes p(σ) = −(B + σI)⁻¹g through the Sherman-Morrison-Woodbury
/// identity on the compact factors.
pub fn p_of_sigma(b: &CompactHessian, g: &[f64], sigma: f64) -> Result<Vec<f64>, SolverError> {
    assert_eq!(g.len(), b.dim());
    let tau = b.gamma() + sigma;
    if tau.abs() < POLE_DEN_TOL {
        return Err(SolverError::SingularShift);
    }
    if b.psi().is_empty() {
        return Ok(g.iter().map(|x| -x / tau).collect());
    }
    let psi_t_g = b.psi().matvec_t(g);
    let small = b.minv().scale(tau).add(&b.psi().gram_with(b.psi()));
    let w = linalg::solve_small(&small, &psi_t_g).map_err(|e| match e {
        LinalgError::Singular => SolverError::Hessian(HessianError::SingularMiddle),
        other => SolverError::Linalg(other),
    })?;
    let correction = b.psi().matvec(&w);
    Ok(g.iter().zip(&correction).map(|(gi, ci)| -(gi - ci) / tau).collect())
}

/// Model value Q(p) = ½pᵀBp + gᵀp.
pub fn q_value(b: &CompactHessian, g: &[f64], p: &[f64]) -> Result<f64, SolverError> {
    let bp = b.apply(p)?;
    Ok(0.5 * dot(p, &bp) + dot(g, p))
}

fn finish(
    b: &CompactHessian,
    g: &[f64],
    delta: f64,
    p: Vec<f64>,
    sigma: f64,
    hard_case: bool,
) -> Result<SubproblemSolution, SolverError> {
    let q = q_value(b, g, &p)?;
    let on_boundary = delta - norm(&p) <= 1e-6 * delta;
    Ok(SubproblemSolution { p, sigma, q_value: q, on_boundary, hard_case })
}

/// Solves the subproblem for a compact BFGS operator. B is positive
/// definite by construction, so the solution is either the unconstrained
/// minimizer or a boundary point found by the Newton root search.
pub fn solve_subproblem_bfgs(
    b: &CompactHessian,
    g: &[f64],
    delta: f64,
) -> Result<SubproblemSolution, SolverError> {
    assert!(delta > 0.0, "radius must be positive");
    debug_assert_eq!(b.kind(), QnKind::Bfgs);
    let f = spectral_factors(b, g)?;
    debug_assert!(f.lambda_min() > 0.0, "BFGS operator must be positive definite");
    let nsq = norm_sq_with_limits(&f, 0.0, 0.0, 0.0);
    let phi0 = if nsq == 0.0 { f64::INFINITY } else { 1.0 / nsq.sqrt() - 1.0 / delta };
    if phi0 >= 0.0 {
        let p = p_of_sigma(b, g, 0.0)?;
        finish(b, g, delta, p, 0.0, false)
    } else {
        let sigma = solve_sigma(&f, delta)?;
        let p = p_of_sigma(b, g, sigma)?;
        finish(b, g, delta, p, sigma, false)
    }
}

/// Solves the subproblem for a compact SR1 operator, which may be
/// indefinite. Covers the interior case, the boundary Newton case, the
/// pseudo-inverse case at σ* = −λ_min, and the hard case where the
/// solution needs a leftmost eigenvector contribution.
pub fn solve_subproblem_sr1(
    b: &CompactHessian,
    g: &[f64],
    delta: f64,
) -> Result<SubproblemSolution, SolverError> {
    assert!(delta > 0.0, "radius must be positive");
    debug_assert_eq!(b.kind(), QnKind::Sr1);
    let f = spectral_factors(b, g)?;
    let lambda_min = f.lambda_min();
    if lambda_min > 0.0 {
        let nsq = norm_sq_with_limits(&f, 0.0, 0.0, 0.0);
        let phi0 = if nsq == 0.0 { f64::INFINITY } else { 1.0 / nsq.sqrt() - 1.0 / delta };
        if phi0 >= 0.0 {
            let p = p_of_sigma(b, g, 0.0)?;
            return finish(b, g, delta, p, 0.0, false);
        }
        let sigma = solve_sigma(&f, delta)?;
        let p = p_of_sigma(b, g, sigma)?;
        return finish(b, g, delta, p, sigma, false);
    }

    // λ_min ≤ 0: examine φ in the limit σ → (−λ_min)⁺
    let sigma_bar = -lambda_min;
    let scale = spectrum_scale(&f);
    let den_tol = CLUSTER_REL_TOL * scale;
    let gnorm = full_g_norm(&f);
    let num_tol = ABSENT_G_REL_TOL * gnorm;
    let gamma_at_min = f.gamma_multiplicity > 0 && f.gamma - lambda_min <= den_tol;

    // leftmost-cluster gradient mass decides whether the limit diverges
    let mut blocked = false;
    for (lam, gp) in f.lambda1.iter().zip(&f.g_par) {
        if lam + sigma_bar <= den_tol && gp.abs() > num_tol {
            blocked = true;
        }
    }
    // The clamped ‖g⊥‖ carries cancellation noise up to ~√ε·‖g‖, enough to
    // fabricate a pole term when γ sits at λ_min. Measure the perpendicular
    // part by explicit projection instead before classifying.
    let mut f_case = f.clone();
    if gamma_at_min && !b.psi().is_empty() {
        let residual = perp_projection(b, &f, g);
        f_case.g_perp_norm = norm(&residual);
    }
    if gamma_at_min && f_case.g_perp_norm > num_tol {
        blocked = true;
    }

    let limit_sq = if blocked {
        f64::INFINITY
    } else {
        norm_sq_with_limits(&f_case, sigma_bar, num_tol, den_tol)
    };

    if limit_sq > delta * delta {
        // infeasible at the limit: boundary root strictly right of −λ_min
        let sigma = solve_sigma(&f_case, delta)?;
        let p = p_of_sigma(b, g, sigma)?;
        return finish(b, g, delta, p, sigma, false);
    }

    // feasible at σ* = −λ_min: pseudo-inverse solution
    let p_hat = pseudo_inverse_solution(b, &f, g, sigma_bar, num_tol, den_tol, gamma_at_min)?;
    if lambda_min < 0.0 && limit_sq < delta * delta {
        // hard case: pad with a leftmost eigenvector to reach the boundary
        let u_min = leftmost_eigenvector(b, &f, den_tol)?;
        let alpha = (delta * delta - dot(&p_hat, &p_hat)).max(0.0).sqrt();
        let mut p = p_hat;
        linalg::axpy(alpha, &u_min, &mut p);
        return finish(b, g, delta, p, sigma_bar, true);
    }
    finish(b, g, delta, p_hat, sigma_bar, false)
}

/// g − Ψ R⁻¹ R⁻ᵀ Ψᵀ g, the projection of g onto the complement of the
/// factor column space.
fn perp_projection(b: &CompactHessian, f: &SpectralFactors, g: &[f64]) -> Vec<f64> {
    let t = b.psi().matvec_t(g);
    let z = f.r_inv.matvec_t(&t);
    let w = f.r_inv.matvec(&z);
    let proj = b.psi().matvec(&w);
    g.iter().zip(&proj).map(|(gi, pi)| gi - pi).collect()
}

/// −(B + σI)†g evaluated through the spectral factors, dropping the
/// components whose denominators vanish at σ.
fn pseudo_inverse_solution(
    b: &CompactHessian,
    f: &SpectralFactors,
    g: &[f64],
    sigma: f64,
    _num_tol: f64,
    den_tol: f64,
    gamma_at_min: bool,
) -> Result<Vec<f64>, SolverError> {
    let m = f.lambda1.len();
    let mut p = vec![0.0; g.len()];
    if m > 0 {
        let mut w = vec![0.0; m];
        for i in 0..m {
            let den = f.lambda1[i] + sigma;
            w[i] = if den.abs() <= den_tol { 0.0 } else { f.g_par[i] / den };
        }
        // p −= Ψ R⁻¹ U w
        let uw = f.u.matvec(&w);
        let ruw = f.r_inv.matvec(&uw);
        let par = b.psi().matvec(&ruw);
        for (pi, v) in p.iter_mut().zip(&par) {
            *pi -= v;
        }
    }
    if !gamma_at_min {
        let tau = f.gamma + sigma;
        let perp = if m > 0 {
            perp_projection(b, f, g)
        } else {
            g.to_vec()
        };
        for (pi, r) in p.iter_mut().zip(&perp) {
            *pi -= r / tau;
        }
    }
    Ok(p)
}

/// A unit eigenvector for λ_min. When λ_min comes from the factor spectrum
/// it is the corresponding column of P∥; when λ_min = γ the canonical basis
/// vectors are projected onto the complement until one survives.
fn leftmost_eigenvector(
    b: &CompactHessian,
    f: &SpectralFactors,
    den_tol: f64,
) -> Result<Vec<f64>, SolverError> {
    let lambda_min = f.lambda_min();
    let from_factor = f
        .lambda1
        .first()
        .map(|l1| l1 - lambda_min <= den_tol)
        .unwrap_or(false);
    if from_factor {
        let ucol = f.u.column(0);
        let rcol = f.r_inv.matvec(&ucol);
        let mut v = b.psi().matvec(&rcol);
        let n = norm(&v);
        if n > 0.0 {
            for x in &mut v {
                *x /= n;
            }
        }
        return Ok(v);
    }
    let n = b.dim();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let v = if b.psi().is_empty() { e } else { perp_projection(b, f, &e) };
        let vn = norm(&v);
        if vn > UMIN_PROJECTION_TOL {
            return Ok(v.iter().map(|x| x / vn).collect());
        }
    }
    Err(SolverError::HardCaseEigenvectorNotFound)
}

/// Ratio of actual to predicted reduction, (f_t − f_k)/Q(p). Q(0) = 0, so
/// the predicted reduction is −Q(p) and the quotient equals the usual
/// reduction ratio with both signs flipped.
pub fn rho(f_cur: f64, f_trial: f64, q_at_p: f64) -> Result<f64, SolverError> {
    if q_at_p.abs() < 1e-300 {
        return Err(SolverError::ZeroPrediction);
    }
    Ok((f_trial - f_cur) / q_at_p)
}

/// Radius schedule: grow by η₄ only when the step was good and pressed
/// against the boundary, shrink by η₂ when the model failed, keep otherwise.
pub fn adjust_radius(st: &TrustRegionState, rho_val: f64, p_norm: f64) -> TrustRegionState {
    let mut out = *st;
    if rho_val > st.tau3 {
        if p_norm > st.eta3 * st.delta {
            out.delta = st.eta4 * st.delta;
        }
    } else if rho_val < st.tau2 {
        out.delta = st.eta2 * st.delta;
    }
    out
}
