//! Dense reference machinery for validating the compact solvers.
//!
//! Everything here takes the slow explicit route: materialize B as an n×n
//! matrix, decompose it with the Jacobi eigensolver, and resolve boundary
//! multipliers by pure bisection on the secular equation. None of it shares
//! code with the compact spectral path, which is exactly what makes it a
//! usable cross-check for the fuzz harness and the test suite.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::hessian::{self, CompactHessian, QnKind};
use crate::linalg::{self, dot, norm, SmallMatrix};
use crate::pairs::{self, CurvaturePairBuffer, BFGS_CURVATURE_TAU, SR1_SKIP_TAU};
use crate::subproblem::{self, SubproblemSolution};

/// Explicit n×n matrix for a compact operator, built column by column.
pub fn materialize(b: &CompactHessian) -> SmallMatrix {
    let n = b.dim();
    let mut out = SmallMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = b.apply(&e).expect("materialization requires an applicable operator");
        e[j] = 0.0;
        for i in 0..n {
            out[(i, j)] = col[i];
        }
    }
    out
}

/// Dense trust-region solution computed with an eigendecomposition and
/// secular-equation bisection.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    pub p: Vec<f64>,
    pub sigma: f64,
    pub q_value: f64,
    pub hard_case: bool,
    pub lambda_min: f64,
}

/// Solves min ½pᵀBp + gᵀp subject to ‖p‖ ≤ delta for a dense symmetric B.
pub fn solve_dense_trs(bd: &SmallMatrix, g: &[f64], delta: f64) -> DenseSolution {
    assert!(bd.is_square());
    let n = bd.rows();
    assert_eq!(g.len(), n);
    let (v, lambda) = linalg::sym_eig(bd).expect("dense eigendecomposition");
    let ghat = v.matvec_t(g);
    let lambda_min = lambda[0];
    let gnorm = norm(g);
    let num_tol = 1e-8 * gnorm;
    let scale = lambda.iter().fold(1.0_f64, |m, l| m.max(l.abs()));
    let den_tol = 1e-9 * scale;

    let norm_at = |sigma: f64| -> f64 {
        let mut sum = 0.0;
        for i in 0..n {
            if ghat[i].abs() <= num_tol && lambda[i] + sigma <= den_tol {
                continue;
            }
            let den = lambda[i] + sigma;
            if den.abs() <= den_tol {
                return f64::INFINITY;
            }
            sum += (ghat[i] / den) * (ghat[i] / den);
        }
        sum.sqrt()
    };

    let build_p = |sigma: f64| -> Vec<f64> {
        let mut coeff = vec![0.0; n];
        for i in 0..n {
            let den = lambda[i] + sigma;
            coeff[i] = if den.abs() <= den_tol { 0.0 } else { -ghat[i] / den };
        }
        v.matvec(&coeff)
    };

    let qv = |p: &[f64]| 0.5 * dot(p, &bd.matvec(p)) + dot(g, p);

    if lambda_min > 0.0 {
        let pn0 = norm_at(0.0);
        if pn0 <= delta {
            let p = build_p(0.0);
            let q = qv(&p);
            return DenseSolution { p, sigma: 0.0, q_value: q, hard_case: false, lambda_min };
        }
    }
    let sigma_bar = (-lambda_min).max(0.0);
    let limit = norm_at(sigma_bar);
    if limit <= delta && lambda_min <= 0.0 {
        let p_hat = build_p(sigma_bar);
        if lambda_min < 0.0 && limit < delta {
            // hard case: pad along the leftmost eigenvector
            let alpha = (delta * delta - dot(&p_hat, &p_hat)).max(0.0).sqrt();
            let u1 = v.column(0);
            let p: Vec<f64> = p_hat.iter().zip(&u1).map(|(a, b)| a + alpha * b).collect();
            let q = qv(&p);
            return DenseSolution { p, sigma: sigma_bar, q_value: q, hard_case: true, lambda_min };
        }
        let q = qv(&p_hat);
        return DenseSolution { p: p_hat, sigma: sigma_bar, q_value: q, hard_case: false, lambda_min };
    }

    // boundary root by bisection on 1/‖p(σ)‖ − 1/δ
    let mut lo = sigma_bar + 1e-14 * (1.0 + sigma_bar);
    let mut hi = sigma_bar + gnorm / delta + lambda_min.abs() + 1.0;
    while norm_at(hi) > delta {
        hi = sigma_bar + 2.0 * (hi - sigma_bar);
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if norm_at(mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + hi) {
            break;
        }
    }
    let sigma = 0.5 * (lo + hi);
    let p = build_p(sigma);
    let q = qv(&p);
    DenseSolution { p, sigma, q_value: q, hard_case: false, lambda_min }
}

/// Optimality certificates for a returned subproblem solution, checked
/// against the densely materialized operator.
#[derive(Debug, Clone)]
pub struct Certificates {
    pub stationarity_residual: f64,
    pub stationarity_bound: f64,
    pub sigma_nonnegative: bool,
    pub complementarity_residual: f64,
    pub complementarity_bound: f64,
    pub shifted_min_eigenvalue: f64,
    pub norm_within_radius: bool,
}

impl Certificates {
    pub fn all_pass(&self) -> bool {
        self.stationarity_residual <= self.stationarity_bound
            && self.sigma_nonnegative
            && self.complementarity_residual <= self.complementarity_bound
            && self.shifted_min_eigenvalue >= -1e-9
            && self.norm_within_radius
    }
}

/// Evaluates the optimality conditions for `sol` on the dense operator.
pub fn certificates(bd: &SmallMatrix, g: &[f64], delta: f64, sol: &SubproblemSolution) -> Certificates {
    let n = bd.rows();
    let bp = bd.matvec(&sol.p);
    let mut resid = 0.0;
    for i in 0..n {
        let r = bp[i] + sol.sigma * sol.p[i] + g[i];
        resid += r * r;
    }
    let resid = resid.sqrt();
    let pn = norm(&sol.p);
    let (_, lambda) = linalg::sym_eig(bd).expect("dense eigendecomposition");
    Certificates {
        stationarity_residual: resid,
        stationarity_bound: 1e-7 * (norm(g) + bd.norm1() * pn),
        sigma_nonnegative: sol.sigma >= 0.0,
        complementarity_residual: (sol.sigma * (delta - pn)).abs(),
        complementarity_bound: 1e-6 * delta * sol.sigma.max(1.0),
        shifted_min_eigenvalue: lambda[0] + sol.sigma,
        norm_within_radius: pn <= delta * (1.0 + 1e-8),
    }
}

/// One randomly generated compact subproblem instance.
pub struct TrsInstance {
    pub b: CompactHessian,
    pub g: Vec<f64>,
    pub delta: f64,
    pub constructed_hard: bool,
}

fn random_unit_range(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Random BFGS instance with up to `l` accepted pairs, n ≤ 50 and δ
/// log-uniform in [1e-3, 1e2].
pub fn random_bfgs_instance(rng: &mut ChaCha8Rng, max_l: usize) -> TrsInstance {
    // keep the factor strictly thinner than the space: 2m < n
    let n = rng.gen_range(12..=50);
    let m = rng.gen_range(0..=max_l.min(5).min((n - 1) / 2));
    let mut buf = CurvaturePairBuffer::new(max_l.min(5).max(1), n);
    let mut stored = 0;
    while stored < m {
        let s = random_unit_range(rng, n);
        let y = random_unit_range(rng, n);
        if pairs::accept_bfgs_pair(&s, &y, BFGS_CURVATURE_TAU).unwrap() {
            buf.push_pair(&s, &y).unwrap();
            stored += 1;
        }
    }
    let gamma = if buf.is_empty() {
        rng.gen_range(0.1..10.0)
    } else {
        hessian::select_gamma_bfgs(&buf).unwrap().gamma
    };
    let b = hessian::build_bfgs(&buf, gamma).unwrap();
    let gscale = 10.0_f64.powf(rng.gen_range(-2.0..2.0));
    let g: Vec<f64> = random_unit_range(rng, n).iter().map(|x| x * gscale).collect();
    let delta = 10.0_f64.powf(rng.gen_range(-3.0..2.0));
    TrsInstance { b, g, delta, constructed_hard: false }
}

/// Random SR1 instance. Pairs are screened with the SR1 skip rule against
/// the operator current at insertion time, mirroring the training loop.
/// When `force_hard` is set the gradient is projected off the leftmost
/// eigenspace and the radius inflated past the limit norm, which lands the
/// instance in the hard case whenever the operator is indefinite.
pub fn random_sr1_instance(rng: &mut ChaCha8Rng, max_l: usize, force_hard: bool) -> TrsInstance {
    loop {
        let n = rng.gen_range(8..=50);
        let m = rng.gen_range(if force_hard { 1 } else { 0 }..=max_l.min(5).min(n - 2).max(1));
        let mut buf = CurvaturePairBuffer::new(max_l.min(5).max(1), n);
        let mut gamma = 1.0;
        let mut b = CompactHessian::seed(QnKind::Sr1, gamma, n);

        // draw pairs from a random symmetric quadratic so that indefinite
        // curvature shows up regularly
        let mut h = SmallMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] = rng.gen_range(-1.0..1.0);
            }
        }
        h.symmetrize();
        if force_hard {
            for i in 0..n {
                h[(i, i)] -= 1.0;
            }
        }

        let mut stored = 0;
        let mut attempts = 0;
        while stored < m && attempts < 200 {
            attempts += 1;
            let s = random_unit_range(rng, n);
            let y = h.matvec(&s);
            let bs = b.apply(&s).unwrap();
            if !pairs::accept_sr1_pair(&s, &y, &bs, SR1_SKIP_TAU).unwrap() {
                continue;
            }
            buf.push_pair(&s, &y).unwrap();
            gamma = hessian::select_gamma_sr1(&buf).unwrap().gamma;
            b = hessian::build_sr1(&buf, gamma).unwrap();
            stored += 1;
        }

        let gscale = 10.0_f64.powf(rng.gen_range(-2.0..2.0));
        let mut g: Vec<f64> = random_unit_range(rng, n).iter().map(|x| x * gscale).collect();
        let mut delta = 10.0_f64.powf(rng.gen_range(-3.0..2.0));
        let mut constructed_hard = false;

        if force_hard {
            let bd = materialize(&b);
            let (v, lambda) = linalg::sym_eig(&bd).unwrap();
            if lambda[0] >= -1e-8 {
                continue; // operator came out positive semidefinite; redraw
            }
            // project g off the leftmost eigenspace
            let cluster = 1e-9 * lambda.iter().fold(1.0_f64, |m, l| m.max(l.abs()));
            for i in 0..n {
                if lambda[i] - lambda[0] <= cluster {
                    let vi = v.column(i);
                    let c = dot(&g, &vi);
                    linalg::axpy(-c, &vi, &mut g);
                }
            }
            // inflate the radius strictly past the limit norm
            let mut limit_sq = 0.0;
            for i in 0..n {
                let den = lambda[i] - lambda[0];
                if den > cluster {
                    let c = dot(&g, &v.column(i));
                    limit_sq += (c / den) * (c / den);
                }
            }
            delta = limit_sq.sqrt() * rng.gen_range(1.2..3.0) + 10.0_f64.powf(rng.gen_range(-2.0..0.0));
            constructed_hard = true;
        }

        return TrsInstance { b, g, delta, constructed_hard };
    }
}

/// Outcome of a fuzz campaign over random subproblem instances.
#[derive(Debug, Default)]
pub struct FuzzReport {
    pub total: usize,
    pub passed: usize,
    pub q_mismatches: usize,
    pub certificate_failures: usize,
    pub hard_cases_seen: usize,
}

impl FuzzReport {
    pub fn all_pass(&self) -> bool {
        self.passed == self.total
    }
}

/// Runs `count` random instances of the given kind through the compact
/// solver and validates every solution against the dense oracle. SR1 runs
/// mix in a constructed hard-case instance every tenth draw.
pub fn run_fuzz(kind: QnKind, count: usize, seed: u64) -> FuzzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = FuzzReport::default();
    for i in 0..count {
        let inst = match kind {
            QnKind::Bfgs => random_bfgs_instance(&mut rng, 5),
            QnKind::Sr1 => random_sr1_instance(&mut rng, 5, i % 10 == 9),
        };
        report.total += 1;
        if check_instance(kind, &inst, &mut report) {
            report.passed += 1;
        }
    }
    report
}

/// Validates a single instance; returns true when the solution matches the
/// dense oracle and every certificate holds.
pub fn check_instance(kind: QnKind, inst: &TrsInstance, report: &mut FuzzReport) -> bool {
    let sol = match kind {
        QnKind::Bfgs => subproblem::solve_subproblem_bfgs(&inst.b, &inst.g, inst.delta),
        QnKind::Sr1 => subproblem::solve_subproblem_sr1(&inst.b, &inst.g, inst.delta),
    };
    let sol = match sol {
        Ok(s) => s,
        Err(_) => {
            report.certificate_failures += 1;
            return false;
        }
    };
    if sol.hard_case {
        report.hard_cases_seen += 1;
    }
    let bd = materialize(&inst.b);
    let certs = certificates(&bd, &inst.g, inst.delta, &sol);
    let oracle = solve_dense_trs(&bd, &inst.g, inst.delta);
    // the solver may not beat the oracle by more than roundoff, and must
    // not fall behind it
    let q_ok = sol.q_value <= oracle.q_value + 1e-7 * (1.0 + oracle.q_value.abs());
    let mut ok = true;
    if !q_ok {
        report.q_mismatches += 1;
        ok = false;
    }
    if !certs.all_pass() {
        report.certificate_failures += 1;
        ok = false;
    }
    ok
}
