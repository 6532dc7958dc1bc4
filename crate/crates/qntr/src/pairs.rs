//! Storage for recent curvature pairs and their cached Gram blocks.
//!
//! The buffer keeps the `l` most recent (s, y) pairs as columns of two tall
//! matrices together with the small products SᵀY and SᵀS that both compact
//! forms need. Gram blocks are updated incrementally on push; debug builds
//! recompute them from scratch and cross-check.

use thiserror::Error;

use crate::linalg::{dot, norm, SmallMatrix, TallMatrix};

/// Curvature threshold for accepting a BFGS pair, sᵀy > τ‖s‖².
pub const BFGS_CURVATURE_TAU: f64 = 1e-2;
/// Denominator threshold for accepting an SR1 pair.
pub const SR1_SKIP_TAU: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PairError {
    #[error("step vector has zero norm")]
    ZeroStep,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("curvature buffer is empty")]
    EmptyBuffer,
}

/// BFGS pair acceptance: sᵀy > τ‖s‖².
pub fn accept_bfgs_pair(s: &[f64], y: &[f64], tau: f64) -> Result<bool, PairError> {
    if s.len() != y.len() {
        return Err(PairError::DimensionMismatch { expected: s.len(), got: y.len() });
    }
    let sn = norm(s);
    if sn == 0.0 {
        return Err(PairError::ZeroStep);
    }
    Ok(dot(s, y) > tau * sn * sn)
}

/// SR1 pair acceptance: |sᵀ(y − Bs)| ≥ τ‖s‖‖y − Bs‖, with `bs` the current
/// approximation applied to s. A vanishing residual y − Bs rejects the pair.
pub fn accept_sr1_pair(s: &[f64], y: &[f64], bs: &[f64], tau: f64) -> Result<bool, PairError> {
    if s.len() != y.len() || s.len() != bs.len() {
        return Err(PairError::DimensionMismatch { expected: s.len(), got: y.len().min(bs.len()) });
    }
    let sn = norm(s);
    if sn == 0.0 {
        return Err(PairError::ZeroStep);
    }
    let resid: Vec<f64> = y.iter().zip(bs).map(|(yi, bi)| yi - bi).collect();
    let rn = norm(&resid);
    if rn == 0.0 {
        return Ok(false);
    }
    Ok(dot(s, &resid).abs() >= tau * sn * rn)
}

/// Ring buffer of the `l` most recent curvature pairs with cached Gram
/// blocks. Pushing past capacity evicts the oldest pair. A rejected pair
/// never reaches the buffer, so eviction only happens on acceptance.
#[derive(Debug, Clone)]
pub struct CurvaturePairBuffer {
    capacity: usize,
    s: TallMatrix,
    y: TallMatrix,
    gram_sy: SmallMatrix,
    gram_ss: SmallMatrix,
}

impl CurvaturePairBuffer {
    pub fn new(capacity: usize, dim: usize) -> Self {
        assert!(capacity >= 1, "memory parameter must be at least 1");
        Self {
            capacity,
            s: TallMatrix::empty(dim),
            y: TallMatrix::empty(dim),
            gram_sy: SmallMatrix::zeros(0, 0),
            gram_ss: SmallMatrix::zeros(0, 0),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.s.rows()
    }

    pub fn len(&self) -> usize {
        self.s.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn s(&self) -> &TallMatrix {
        &self.s
    }

    pub fn y(&self) -> &TallMatrix {
        &self.y
    }

    /// Cached SᵀY.
    pub fn gram_sy(&self) -> &SmallMatrix {
        &self.gram_sy
    }

    /// Cached SᵀS.
    pub fn gram_ss(&self) -> &SmallMatrix {
        &self.gram_ss
    }

    /// Most recent stored pair, if any.
    pub fn most_recent(&self) -> Option<(&[f64], &[f64])> {
        if self.is_empty() {
            None
        } else {
            let j = self.len() - 1;
            Some((self.s.column(j), self.y.column(j)))
        }
    }

    /// Appends an already-accepted pair, evicting the oldest pair when at
    /// capacity. Gram blocks gain one new row and column each in O(l·n).
    pub fn push_pair(&mut self, s: &[f64], y: &[f64]) -> Result<(), PairError> {
        let dim = self.dim();
        if s.len() != dim || y.len() != dim {
            return Err(PairError::DimensionMismatch { expected: dim, got: s.len() });
        }
        if self.len() == self.capacity {
            self.s.remove_first_column();
            self.y.remove_first_column();
            self.gram_sy = drop_first_row_col(&self.gram_sy);
            self.gram_ss = drop_first_row_col(&self.gram_ss);
        }
        let m = self.len();
        let mut sy = SmallMatrix::zeros(m + 1, m + 1);
        let mut ss = SmallMatrix::zeros(m + 1, m + 1);
        for i in 0..m {
            for j in 0..m {
                sy[(i, j)] = self.gram_sy[(i, j)];
                ss[(i, j)] = self.gram_ss[(i, j)];
            }
        }
        for i in 0..m {
            sy[(i, m)] = dot(self.s.column(i), y);
            sy[(m, i)] = dot(s, self.y.column(i));
            let sis = dot(self.s.column(i), s);
            ss[(i, m)] = sis;
            ss[(m, i)] = sis;
        }
        sy[(m, m)] = dot(s, y);
        ss[(m, m)] = dot(s, s);
        self.s.push_column(s);
        self.y.push_column(y);
        self.gram_sy = sy;
        self.gram_ss = ss;
        #[cfg(debug_assertions)]
        self.debug_check_grams();
        Ok(())
    }

    /// Drops the oldest pair. Used when the compact factor turns out rank
    /// deficient and the caller retries with a shorter history.
    pub fn drop_oldest(&mut self) {
        if self.is_empty() {
            return;
        }
        self.s.remove_first_column();
        self.y.remove_first_column();
        self.gram_sy = drop_first_row_col(&self.gram_sy);
        self.gram_ss = drop_first_row_col(&self.gram_ss);
    }

    /// Splits the cached SᵀY into its strictly lower triangular, diagonal,
    /// and strictly upper triangular parts. The three summands reconstruct
    /// SᵀY exactly.
    pub fn split_gram(&self) -> Result<(SmallMatrix, SmallMatrix, SmallMatrix), PairError> {
        if self.is_empty() {
            return Err(PairError::EmptyBuffer);
        }
        let m = self.len();
        let mut l = SmallMatrix::zeros(m, m);
        let mut d = SmallMatrix::zeros(m, m);
        let mut u = SmallMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let v = self.gram_sy[(i, j)];
                if i > j {
                    l[(i, j)] = v;
                } else if i == j {
                    d[(i, j)] = v;
                } else {
                    u[(i, j)] = v;
                }
            }
        }
        Ok((l, d, u))
    }

    #[cfg(debug_assertions)]
    fn debug_check_grams(&self) {
        let sy = self.s.gram_with(&self.y);
        let ss = self.s.gram_with(&self.s);
        let scale = sy.max_abs().max(ss.max_abs()).max(1e-300);
        for i in 0..self.len() {
            for j in 0..self.len() {
                debug_assert!(
                    (sy[(i, j)] - self.gram_sy[(i, j)]).abs() <= 1e-12 * scale,
                    "cached SᵀY diverged from recomputation"
                );
                debug_assert!(
                    (ss[(i, j)] - self.gram_ss[(i, j)]).abs() <= 1e-12 * scale,
                    "cached SᵀS diverged from recomputation"
                );
            }
        }
    }
}

fn drop_first_row_col(m: &SmallMatrix) -> SmallMatrix {
    let n = m.rows();
    if n == 0 {
        return m.clone();
    }
    let mut out = SmallMatrix::zeros(n - 1, n - 1);
    for i in 1..n {
        for j in 1..n {
            out[(i - 1, j - 1)] = m[(i, j)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bfgs_acceptance_rule() {
        assert!(accept_bfgs_pair(&[1.0, 0.0], &[2.0, 0.0], 1e-2).unwrap());
        assert!(!accept_bfgs_pair(&[1.0, 0.0], &[-1.0, 0.0], 1e-2).unwrap());
        // sᵀy = 5e-3 is below τ‖s‖² = 1e-2
        assert!(!accept_bfgs_pair(&[1.0, 0.0], &[5e-3, 0.0], 1e-2).unwrap());
        assert_eq!(
            accept_bfgs_pair(&[0.0, 0.0], &[1.0, 0.0], 1e-2).unwrap_err(),
            PairError::ZeroStep
        );
    }

    #[test]
    fn sr1_acceptance_rule() {
        assert!(accept_sr1_pair(&[1.0, 0.0], &[3.0, 0.0], &[1.0, 0.0], SR1_SKIP_TAU).unwrap());
        // y == Bs means a vanishing denominator
        assert!(!accept_sr1_pair(&[1.0, 0.0], &[2.0, 0.0], &[2.0, 0.0], SR1_SKIP_TAU).unwrap());
        // residual orthogonal to s
        assert!(!accept_sr1_pair(&[1.0, 0.0], &[1.0, 1.0], &[1.0, 0.0], SR1_SKIP_TAU).unwrap());
    }

    #[test]
    fn push_and_evict() {
        let mut buf = CurvaturePairBuffer::new(3, 2);
        buf.push_pair(&[1.0, 0.0], &[2.0, 0.0]).unwrap();
        assert_eq!(buf.len(), 1);
        buf.push_pair(&[0.0, 1.0], &[0.0, 3.0]).unwrap();
        buf.push_pair(&[1.0, 1.0], &[2.0, 3.0]).unwrap();
        assert_eq!(buf.len(), 3);
        buf.push_pair(&[4.0, 0.0], &[8.0, 0.0]).unwrap();
        assert_eq!(buf.len(), 3, "capacity bound");
        // oldest pair gone: first column is now (0,1)
        assert_eq!(buf.s().column(0), &[0.0, 1.0]);
        let (s_new, y_new) = buf.most_recent().unwrap();
        assert_eq!(s_new, &[4.0, 0.0]);
        assert_eq!(y_new, &[8.0, 0.0]);
    }

    #[test]
    fn gram_matches_recomputation_after_random_pushes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut buf = CurvaturePairBuffer::new(4, 7);
        for _ in 0..25 {
            let s: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
            buf.push_pair(&s, &y).unwrap();
            let sy = buf.s().gram_with(buf.y());
            let ss = buf.s().gram_with(buf.s());
            let scale = sy.max_abs().max(ss.max_abs()).max(1.0);
            for i in 0..buf.len() {
                for j in 0..buf.len() {
                    assert!((sy[(i, j)] - buf.gram_sy()[(i, j)]).abs() < 1e-12 * scale);
                    assert!((ss[(i, j)] - buf.gram_ss()[(i, j)]).abs() < 1e-12 * scale);
                }
            }
        }
    }

    #[test]
    fn split_gram_hand_cases() {
        let mut buf = CurvaturePairBuffer::new(2, 2);
        buf.push_pair(&[1.0, 0.0], &[1.0, 3.0]).unwrap();
        buf.push_pair(&[0.0, 1.0], &[2.0, 4.0]).unwrap();
        // SᵀY = [[1,2],[3,4]]
        let sy = buf.gram_sy();
        assert_eq!(sy[(0, 0)], 1.0);
        assert_eq!(sy[(0, 1)], 2.0);
        assert_eq!(sy[(1, 0)], 3.0);
        assert_eq!(sy[(1, 1)], 4.0);
        let (l, d, u) = buf.split_gram().unwrap();
        assert_eq!(l[(1, 0)], 3.0);
        assert_eq!(l[(0, 0)] + l[(0, 1)] + l[(1, 1)], 0.0);
        assert_eq!(d[(0, 0)], 1.0);
        assert_eq!(d[(1, 1)], 4.0);
        assert_eq!(u[(0, 1)], 2.0);
    }

    #[test]
    fn split_gram_single_pair_and_empty() {
        let mut buf = CurvaturePairBuffer::new(2, 1);
        assert_eq!(buf.split_gram().unwrap_err(), PairError::EmptyBuffer);
        buf.push_pair(&[1.0], &[5.0]).unwrap();
        let (l, d, u) = buf.split_gram().unwrap();
        assert_eq!(l[(0, 0)], 0.0);
        assert_eq!(d[(0, 0)], 5.0);
        assert_eq!(u[(0, 0)], 0.0);
    }

    #[test]
    fn split_gram_reconstructs_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut buf = CurvaturePairBuffer::new(6, 9);
        for _ in 0..6 {
            let s: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
            buf.push_pair(&s, &y).unwrap();
        }
        let (l, d, u) = buf.split_gram().unwrap();
        let sum = l.add(&d).add(&u);
        for i in 0..6 {
            for j in 0..6 {
                // bitwise: the split moves entries without arithmetic
                assert_eq!(sum[(i, j)], buf.gram_sy()[(i, j)]);
            }
        }
    }
}
