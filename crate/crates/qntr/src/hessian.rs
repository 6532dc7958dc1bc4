//! Compact quasi-Newton operators B = γI + Ψ·M·Ψᵀ.
//!
//! Both update families share the same representation: a scalar γ for the
//! seed matrix B₀ = γI, a tall factor Ψ, and the small middle matrix stored
//! uninverted (M⁻¹) and factored on demand when the operator is applied.
//! γ is chosen against the smallest generalized eigenvalue λ̂ of
//! (L + D + Lᵀ)u = λ·SᵀS·u so that the seed does not fabricate curvature
//! the stored pairs contradict.

use thiserror::Error;

use crate::linalg::{self, dot, norm, LinalgError, SmallMatrix, TallMatrix};
use crate::pairs::{CurvaturePairBuffer, PairError};

/// Shrink factor applied to a positive λ̂ for the BFGS seed.
pub const BFGS_GAMMA_SHRINK: f64 = 0.9;
/// Shrink factor applied to a positive λ̂ for the SR1 seed.
pub const SR1_GAMMA_SHRINK: f64 = 0.5;
/// Growth factor applied to a nonpositive λ̂ for the SR1 seed.
pub const SR1_GAMMA_GROW: f64 = 1.5;
/// Magnitude floor keeping the SR1 seed away from zero.
pub const SR1_GAMMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HessianError {
    #[error("quotient yᵀy/yᵀs is degenerate")]
    DegenerateQuotient,
    #[error("middle matrix is singular")]
    SingularMiddle,
    #[error("curvature buffer is empty")]
    EmptyBuffer,
    #[error("invalid gamma for {0} form")]
    InvalidGamma(&'static str),
    #[error(transparent)]
    Pair(#[from] PairError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QnKind {
    Bfgs,
    Sr1,
}

/// Compact limited-memory operator. Immutable once built; `apply` is pure.
#[derive(Debug, Clone)]
pub struct CompactHessian {
    kind: QnKind,
    gamma: f64,
    psi: TallMatrix,
    minv: SmallMatrix,
}

/// Outcome of a seed-scalar selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaResult {
    pub gamma: f64,
    /// Smallest generalized eigenvalue λ̂ when the eigensolve succeeded.
    pub lambda_hat_smallest: Option<f64>,
    /// True when the fallback branch (heuristic quotient or floor) decided.
    pub used_heuristic: bool,
}

/// Heuristic seed scalar yᵀy / yᵀs from a single pair.
pub fn gamma_h(s: &[f64], y: &[f64]) -> Result<f64, HessianError> {
    let ys = dot(y, s);
    if ys.abs() < 1e-14 * norm(y) * norm(s) {
        return Err(HessianError::DegenerateQuotient);
    }
    Ok(dot(y, y) / ys)
}

fn lambda_hat(buf: &CurvaturePairBuffer) -> Result<f64, HessianError> {
    let (l, d, _) = buf.split_gram()?;
    let lhs = l.add(&d).add(&l.transpose());
    Ok(linalg::gen_sym_eig_smallest(&lhs, buf.gram_ss())?)
}

/// BFGS seed selection: γ = max{1, 0.9·λ̂} when λ̂ > 0, otherwise
/// γ = max{1, γ_h} from the most recent pair. A failed eigensolve (SᵀS not
/// positive definite) falls back to the heuristic branch.
pub fn select_gamma_bfgs(buf: &CurvaturePairBuffer) -> Result<GammaResult, HessianError> {
    if buf.is_empty() {
        return Err(HessianError::EmptyBuffer);
    }
    match lambda_hat(buf) {
        Ok(lh) if lh > 0.0 => Ok(GammaResult {
            gamma: 1.0_f64.max(BFGS_GAMMA_SHRINK * lh),
            lambda_hat_smallest: Some(lh),
            used_heuristic: false,
        }),
        Ok(lh) => Ok(GammaResult {
            gamma: 1.0_f64.max(recent_gamma_h(buf)),
            lambda_hat_smallest: Some(lh),
            used_heuristic: true,
        }),
        Err(HessianError::Linalg(_)) => Ok(GammaResult {
            gamma: 1.0_f64.max(recent_gamma_h(buf)),
            lambda_hat_smallest: None,
            used_heuristic: true,
        }),
        Err(e) => Err(e),
    }
}

fn recent_gamma_h(buf: &CurvaturePairBuffer) -> f64 {
    buf.most_recent()
        .and_then(|(s, y)| gamma_h(s, y).ok())
        .unwrap_or(1.0)
}

/// SR1 seed selection: γ = max{1e-6, 0.5·λ̂} when λ̂ > 0, otherwise
/// γ = min{−1e-6, 1.5·λ̂}. A failed eigensolve yields γ = −1e-6, which keeps
/// the seed usable for indefinite approximations.
pub fn select_gamma_sr1(buf: &CurvaturePairBuffer) -> Result<GammaResult, HessianError> {
    if buf.is_empty() {
        return Err(HessianError::EmptyBuffer);
    }
    match lambda_hat(buf) {
        Ok(lh) if lh > 0.0 => Ok(GammaResult {
            gamma: SR1_GAMMA_FLOOR.max(SR1_GAMMA_SHRINK * lh),
            lambda_hat_smallest: Some(lh),
            used_heuristic: false,
        }),
        Ok(lh) => Ok(GammaResult {
            gamma: (-SR1_GAMMA_FLOOR).min(SR1_GAMMA_GROW * lh),
            lambda_hat_smallest: Some(lh),
            used_heuristic: false,
        }),
        Err(HessianError::Linalg(_)) => Ok(GammaResult {
            gamma: -SR1_GAMMA_FLOOR,
            lambda_hat_smallest: None,
            used_heuristic: true,
        }),
        Err(e) => Err(e),
    }
}

/// Builds the compact BFGS operator: Ψ = [γS  Y] and
/// M⁻¹ = [[−γSᵀS, −L], [−Lᵀ, D]].
pub fn build_bfgs(buf: &CurvaturePairBuffer, gamma: f64) -> Result<CompactHessian, HessianError> {
    if !(gamma > 0.0) {
        return Err(HessianError::InvalidGamma("BFGS"));
    }
    let m = buf.len();
    let n = buf.dim();
    let mut psi = TallMatrix::empty(n);
    for j in 0..m {
        let col: Vec<f64> = buf.s().column(j).iter().map(|x| gamma * x).collect();
        psi.push_column(&col);
    }
    for j in 0..m {
        psi.push_column(buf.y().column(j));
    }
    let mut minv = SmallMatrix::zeros(2 * m, 2 * m);
    if m > 0 {
        let (l, d, _) = buf.split_gram()?;
        let ss = buf.gram_ss();
        for i in 0..m {
            for j in 0..m {
                minv[(i, j)] = -gamma * ss[(i, j)];
                minv[(i, m + j)] = -l[(i, j)];
                minv[(m + i, j)] = -l[(j, i)];
                minv[(m + i, m + j)] = d[(i, j)];
            }
        }
    }
    Ok(CompactHessian { kind: QnKind::Bfgs, gamma, psi, minv })
}

/// Builds the compact SR1 operator: Ψ = Y − γS and
/// M⁻¹ = D + L + Lᵀ − γSᵀS.
pub fn build_sr1(buf: &CurvaturePairBuffer, gamma: f64) -> Result<CompactHessian, HessianError> {
    if gamma == 0.0 {
        return Err(HessianError::InvalidGamma("SR1"));
    }
    let m = buf.len();
    let n = buf.dim();
    let mut psi = TallMatrix::empty(n);
    for j in 0..m {
        let col: Vec<f64> = buf
            .y()
            .column(j)
            .iter()
            .zip(buf.s().column(j))
            .map(|(yi, si)| yi - gamma * si)
            .collect();
        psi.push_column(&col);
    }
    let minv = if m > 0 {
        let (l, d, _) = buf.split_gram()?;
        let mut mm = d.add(&l).add(&l.transpose()).sub(&buf.gram_ss().scale(gamma));
        mm.symmetrize();
        mm
    } else {
        SmallMatrix::zeros(0, 0)
    };
    Ok(CompactHessian { kind: QnKind::Sr1, gamma, psi, minv })
}

impl CompactHessian {
    /// The seed operator γI with an empty factor, used before any pair has
    /// been accepted.
    pub fn seed(kind: QnKind, gamma: f64, dim: usize) -> Self {
        Self { kind, gamma, psi: TallMatrix::empty(dim), minv: SmallMatrix::zeros(0, 0) }
    }

    pub fn kind(&self) -> QnKind {
        self.kind
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn psi(&self) -> &TallMatrix {
        &self.psi
    }

    /// The middle matrix stored uninverted.
    pub fn minv(&self) -> &SmallMatrix {
        &self.minv
    }

    pub fn dim(&self) -> usize {
        self.psi.rows()
    }

    /// Number of columns in Ψ (2m for BFGS, m for SR1).
    pub fn factor_cols(&self) -> usize {
        self.psi.cols()
    }

    /// Applies the operator: B·v = γv + Ψ·(M⁻¹)⁻¹·Ψᵀv.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>, HessianError> {
        assert_eq!(v.len(), self.dim(), "dimension mismatch");
        let mut out: Vec<f64> = v.iter().map(|x| self.gamma * x).collect();
        if !self.psi.is_empty() {
            let t = self.psi.matvec_t(v);
            let w = linalg::solve_small(&self.minv, &t).map_err(|e| match e {
                LinalgError::Singular => HessianError::SingularMiddle,
                other => HessianError::Linalg(other),
            })?;
            let correction = self.psi.matvec(&w);
            for (o, c) in out.iter_mut().zip(&correction) {
                *o += c;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn dense_identity(n: usize, gamma: f64) -> SmallMatrix {
        SmallMatrix::identity(n).scale(gamma)
    }

    /// Rank-two BFGS recursion applied densely, the oracle for the compact
    /// form.
    fn dense_bfgs_update(b: &SmallMatrix, s: &[f64], y: &[f64]) -> SmallMatrix {
        let n = b.rows();
        let bs = b.matvec(s);
        let sbs = dot(s, &bs);
        let ys = dot(y, s);
        let mut out = b.clone();
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += -bs[i] * bs[j] / sbs + y[i] * y[j] / ys;
            }
        }
        out
    }

    /// Rank-one SR1 recursion applied densely.
    fn dense_sr1_update(b: &SmallMatrix, s: &[f64], y: &[f64]) -> SmallMatrix {
        let n = b.rows();
        let bs = b.matvec(s);
        let r: Vec<f64> = y.iter().zip(&bs).map(|(yi, bi)| yi - bi).collect();
        let rs = dot(&r, s);
        let mut out = b.clone();
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += r[i] * r[j] / rs;
            }
        }
        out
    }

    fn materialize(b: &CompactHessian) -> SmallMatrix {
        let n = b.dim();
        let mut out = SmallMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = b.apply(&e).unwrap();
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        out
    }

    #[test]
    fn gamma_h_cases() {
        assert!((gamma_h(&[1.0, 0.0], &[2.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
        let s = [0.3, -0.7, 0.2];
        assert!((gamma_h(&s, &s).unwrap() - 1.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let s: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut y: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if dot(&y, &s) < 0.0 {
                for v in &mut y {
                    *v = -*v;
                }
            }
            if dot(&y, &s).abs() < 1e-3 {
                continue;
            }
            let expect = dot(&y, &y) / dot(&y, &s);
            assert!((gamma_h(&s, &y).unwrap() - expect).abs() < 1e-12 * expect.abs());
        }
        assert_eq!(
            gamma_h(&[1.0, 0.0], &[0.0, 1.0]).unwrap_err(),
            HessianError::DegenerateQuotient
        );
    }

    #[test]
    fn gamma_bfgs_single_pair_branches() {
        // lambda_hat = 2 gives max{1, 1.8} = 1.8
        let mut buf = CurvaturePairBuffer::new(3, 2);
        buf.push_pair(&[1.0, 0.0], &[2.0, 0.0]).unwrap();
        let g = select_gamma_bfgs(&buf).unwrap();
        assert!((g.gamma - 1.8).abs() < 1e-12);
        assert!(!g.used_heuristic);
        assert!((g.lambda_hat_smallest.unwrap() - 2.0).abs() < 1e-12);

        // lambda_hat = 0.5 clamps to 1
        let mut buf = CurvaturePairBuffer::new(3, 2);
        buf.push_pair(&[1.0, 0.0], &[0.5, 0.0]).unwrap();
        let g = select_gamma_bfgs(&buf).unwrap();
        assert!((g.gamma - 1.0).abs() < 1e-12);

        // negative curvature pair forced in: heuristic branch
        let mut buf = CurvaturePairBuffer::new(3, 2);
        buf.push_pair(&[1.0, 0.0], &[-2.0, 0.0]).unwrap();
        let g = select_gamma_bfgs(&buf).unwrap();
        // lambda_hat = -2 <= 0, gamma_h = 4/-2 = -2, so max{1, -2} = 1
        assert!(g.used_heuristic);
        assert!((g.gamma - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_sr1_branches() {
        // lambda_hat = 2: max{1e-6, 1} = 1
        let mut buf = CurvaturePairBuffer::new(3, 2);
        buf.push_pair(&[1.0, 0.0], &[2.0, 0.0]).unwrap();
        let g = select_gamma_sr1(&buf).unwrap();
        assert!((g.gamma - 1.0).abs() < 1e-12);

        // lambda_hat = -2: min{-1e-6, -3} = -3
        let mut buf = CurvaturePairBuffer::new(3, 2);
        buf.push_pair(&[1.0, 0.0], &[-2.0, 0.0]).unwrap();
        let g = select_gamma_sr1(&buf).unwrap();
        assert!((g.gamma + 3.0).abs() < 1e-12);

        // tiny positive lambda_hat clamps at the floor
        let mut buf = CurvaturePairBuffer::new(3, 2);
        buf.push_pair(&[1.0, 0.0], &[1e-9, 0.0]).unwrap();
        let g = select_gamma_sr1(&buf).unwrap();
        assert_eq!(g.gamma, 1e-6);
    }

    #[test]
    fn sr1_gamma_never_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let mut buf = CurvaturePairBuffer::new(3, 4);
            for _ in 0..3 {
                let s: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let y: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                buf.push_pair(&s, &y).unwrap();
            }
            let g = select_gamma_sr1(&buf).unwrap();
            assert!(g.gamma.abs() >= 1e-6);
        }
    }

    #[test]
    fn bfgs_empty_buffer_is_scaled_identity() {
        let b = CompactHessian::seed(QnKind::Bfgs, 3.0, 4);
        let v = [1.0, -2.0, 0.5, 0.0];
        let bv = b.apply(&v).unwrap();
        for (o, x) in bv.iter().zip(&v) {
            assert_eq!(*o, 3.0 * x);
        }
        assert_eq!(b.factor_cols(), 0);
    }

    #[test]
    fn bfgs_single_pair_matches_dense_recursion() {
        let mut buf = CurvaturePairBuffer::new(3, 2);
        buf.push_pair(&[1.0, 0.0], &[2.0, 0.0]).unwrap();
        let b = build_bfgs(&buf, 3.0).unwrap();
        let dense = dense_bfgs_update(&dense_identity(2, 3.0), &[1.0, 0.0], &[2.0, 0.0]);
        let compact = materialize(&b);
        for i in 0..2 {
            for j in 0..2 {
                assert!((compact[(i, j)] - dense[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bfgs_multi_pair_matches_dense_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 6;
        let mut buf = CurvaturePairBuffer::new(5, n);
        let gamma = 2.5;
        let mut dense = dense_identity(n, gamma);
        let mut stored = 0;
        while stored < 3 {
            let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if !accept_ok(&s, &y) {
                continue;
            }
            buf.push_pair(&s, &y).unwrap();
            stored += 1;
        }
        // dense recursion re-run from the same seed over the stored pairs
        for j in 0..buf.len() {
            dense = dense_bfgs_update(&dense, buf.s().column(j), buf.y().column(j));
        }
        let b = build_bfgs(&buf, gamma).unwrap();
        let compact = materialize(&b);
        for i in 0..n {
            for j in 0..n {
                assert!(
                    (compact[(i, j)] - dense[(i, j)]).abs() < 1e-10,
                    "mismatch at ({i},{j}): {} vs {}",
                    compact[(i, j)],
                    dense[(i, j)]
                );
            }
        }
    }

    fn accept_ok(s: &[f64], y: &[f64]) -> bool {
        crate::pairs::accept_bfgs_pair(s, y, crate::pairs::BFGS_CURVATURE_TAU).unwrap()
    }

    #[test]
    fn sr1_single_pair_secant() {
        let mut buf = CurvaturePairBuffer::new(3, 2);
        buf.push_pair(&[1.0, 0.0], &[3.0, 0.0]).unwrap();
        let b = build_sr1(&buf, 1.0).unwrap();
        let be1 = b.apply(&[1.0, 0.0]).unwrap();
        assert!((be1[0] - 3.0).abs() < 1e-12);
        assert!(be1[1].abs() < 1e-12);
        // dense rank-one oracle agrees
        let dense = dense_sr1_update(&dense_identity(2, 1.0), &[1.0, 0.0], &[3.0, 0.0]);
        let compact = materialize(&b);
        for i in 0..2 {
            for j in 0..2 {
                assert!((compact[(i, j)] - dense[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sr1_reproduces_quadratic_on_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let n = 6;
        let mut h = SmallMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] = rng.gen_range(-1.0..1.0);
            }
        }
        h.symmetrize();
        let mut buf = CurvaturePairBuffer::new(5, n);
        for _ in 0..3 {
            let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = h.matvec(&s);
            buf.push_pair(&s, &y).unwrap();
        }
        let (l, d, _) = buf.split_gram().unwrap();
        let lhs = l.add(&d).add(&l.transpose());
        let lam_hat = linalg::gen_sym_eig_smallest(&lhs, buf.gram_ss()).unwrap();
        let gamma = lam_hat - 1.0; // strictly below lambda_hat
        let b = build_sr1(&buf, gamma).unwrap();
        // Bv = Hv for v in span(S)
        for j in 0..buf.len() {
            let v = buf.s().column(j);
            let bv = b.apply(v).unwrap();
            let hv = h.matvec(v);
            for i in 0..n {
                assert!((bv[i] - hv[i]).abs() < 1e-9, "span property violated");
            }
        }
    }

    #[test]
    fn apply_matches_dense_materialization() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..30 {
            let n = rng.gen_range(2..10);
            let mut buf = CurvaturePairBuffer::new(4, n);
            let mut pushed = 0;
            while pushed < 2 {
                let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                if accept_ok(&s, &y) {
                    buf.push_pair(&s, &y).unwrap();
                    pushed += 1;
                }
            }
            let b = build_bfgs(&buf, 1.7).unwrap();
            let dense = materialize(&b);
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bv = b.apply(&v).unwrap();
            let dv = dense.matvec(&v);
            let scale = dense.max_abs().max(1.0);
            for i in 0..n {
                assert!((bv[i] - dv[i]).abs() < 1e-11 * scale);
            }
            // zero vector maps to zero
            let z = b.apply(&vec![0.0; n]).unwrap();
            assert!(z.iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn secant_property_most_recent_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..50 {
            let n = rng.gen_range(2..8);
            let mut buf = CurvaturePairBuffer::new(3, n);
            let mut pushed = 0;
            while pushed < 3 {
                let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                if accept_ok(&s, &y) {
                    buf.push_pair(&s, &y).unwrap();
                    pushed += 1;
                }
            }
            let gamma = select_gamma_bfgs(&buf).unwrap().gamma;
            let b = build_bfgs(&buf, gamma).unwrap();
            let (s, y) = buf.most_recent().unwrap();
            let bs = b.apply(s).unwrap();
            let yn = norm(y).max(1.0);
            for i in 0..n {
                assert!((bs[i] - y[i]).abs() < 1e-9 * yn, "BFGS secant violated");
            }
        }
    }

    #[test]
    fn bfgs_operator_stays_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for _ in 0..1000 {
            let n = rng.gen_range(2..=12);
            let m = rng.gen_range(1..=4);
            let mut buf = CurvaturePairBuffer::new(m, n);
            let mut pushed = 0;
            while pushed < m {
                let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                if accept_ok(&s, &y) {
                    buf.push_pair(&s, &y).unwrap();
                    pushed += 1;
                }
            }
            let gamma = select_gamma_bfgs(&buf).unwrap().gamma;
            let b = build_bfgs(&buf, gamma).unwrap();
            let dense = materialize(&b);
            let (_, lambda) = linalg::sym_eig(&dense).unwrap();
            assert!(lambda[0] > 0.0, "BFGS operator lost positive definiteness");
        }
    }
}
