//! Differentiable objectives with subsampled loss and gradient.
//!
//! An objective exposes the mean loss and mean gradient over an index set of
//! its samples. Summation always runs in ascending index order so that a
//! fixed seed reproduces runs bitwise. Two objectives ship here: a quadratic
//! with a shared Hessian across samples and a small multilayer perceptron
//! with rectifier hidden layers and a softmax cross-entropy output.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{self, dot, SmallMatrix, TallMatrix};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ObjectiveError {
    #[error("sample index {index} out of range for {count} samples")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("empty index set")]
    EmptyIndexSet,
    #[error("parameter dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A deterministic differentiable objective over a finite sample set.
pub trait Objective: Send + Sync {
    fn param_dim(&self) -> usize;
    fn sample_count(&self) -> usize;

    /// Mean loss and mean gradient over the given sample indices. The
    /// reduction order is ascending in index regardless of the order given.
    fn eval_batch(&self, w: &[f64], indices: &[usize]) -> Result<(f64, Vec<f64>), ObjectiveError>;

    /// Deterministic starting point for the given seed.
    fn init_params(&self, seed: u64) -> Vec<f64>;

    /// Classification accuracy in percent over the given indices, when the
    /// objective has that notion.
    fn accuracy(&self, _w: &[f64], _indices: &[usize]) -> Option<f64> {
        None
    }
}

/// Mean loss and gradient over the whole sample set.
pub fn eval_full(obj: &dyn Objective, w: &[f64]) -> Result<(f64, Vec<f64>), ObjectiveError> {
    let all: Vec<usize> = (0..obj.sample_count()).collect();
    obj.eval_batch(w, &all)
}

fn check_indices(indices: &[usize], count: usize) -> Result<Vec<usize>, ObjectiveError> {
    if indices.is_empty() {
        return Err(ObjectiveError::EmptyIndexSet);
    }
    for &i in indices {
        if i >= count {
            return Err(ObjectiveError::IndexOutOfRange { index: i, count });
        }
    }
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    Ok(sorted)
}

/// F(w) = ½wᵀHw + gᵀw with the same value for every sample, so stochastic
/// and deterministic evaluation coincide exactly.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    h: SmallMatrix,
    g: Vec<f64>,
    samples: usize,
}

impl QuadraticObjective {
    pub fn new(h: SmallMatrix, g: Vec<f64>, samples: usize) -> Self {
        assert!(h.is_square());
        assert_eq!(h.rows(), g.len());
        assert!(samples >= 1);
        Self { h, g, samples }
    }

    /// Random symmetric positive definite instance with eigenvalues
    /// log-spaced in [1, cond].
    pub fn random_spd(dim: usize, cond: f64, seed: u64, samples: usize) -> Self {
        assert!(dim >= 1 && cond >= 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..dim)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let raw = TallMatrix::from_columns(dim, &cols);
        let (q, _) = linalg::thin_qr(&raw).expect("random matrix is full rank");
        let mut h = SmallMatrix::zeros(dim, dim);
        for k in 0..dim {
            let t = if dim == 1 { 0.0 } else { k as f64 / (dim - 1) as f64 };
            let eig = cond.powf(t);
            let qk = q.column(k);
            for i in 0..dim {
                for j in 0..dim {
                    h[(i, j)] += eig * qk[i] * qk[j];
                }
            }
        }
        h.symmetrize();
        let g: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self::new(h, g, samples)
    }

    pub fn hessian(&self) -> &SmallMatrix {
        &self.h
    }
}

impl Objective for QuadraticObjective {
    fn param_dim(&self) -> usize {
        self.g.len()
    }

    fn sample_count(&self) -> usize {
        self.samples
    }

    fn eval_batch(&self, w: &[f64], indices: &[usize]) -> Result<(f64, Vec<f64>), ObjectiveError> {
        if w.len() != self.param_dim() {
            return Err(ObjectiveError::DimensionMismatch { expected: self.param_dim(), got: w.len() });
        }
        check_indices(indices, self.samples)?;
        let hw = self.h.matvec(w);
        let loss = 0.5 * dot(w, &hw) + dot(&self.g, w);
        let grad: Vec<f64> = hw.iter().zip(&self.g).map(|(a, b)| a + b).collect();
        Ok((loss, grad))
    }

    fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.param_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }
}

/// Multilayer perceptron with rectifier hidden activations and a fused
/// softmax cross-entropy output, holding its dataset. Parameters live in
/// one flat vector ordered layer by layer, weights before biases, weights
/// stored row-major as (out × in).
#[derive(Debug, Clone)]
pub struct MlpModel {
    layers: Vec<usize>,
    inputs: Vec<f64>,
    labels: Vec<u8>,
    classes: usize,
}

impl MlpModel {
    pub fn new(layers: Vec<usize>, inputs: Vec<f64>, labels: Vec<u8>) -> Self {
        assert!(layers.len() >= 2, "need at least input and output layers");
        let din = layers[0];
        assert_eq!(inputs.len() % din, 0, "input row length mismatch");
        let n = inputs.len() / din;
        assert_eq!(n, labels.len(), "sample/label count mismatch");
        let classes = *layers.last().unwrap();
        assert!(labels.iter().all(|&l| (l as usize) < classes), "label out of range");
        Self { layers, inputs, labels, classes }
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    fn input(&self, i: usize) -> &[f64] {
        let d = self.layers[0];
        &self.inputs[i * d..(i + 1) * d]
    }

    fn weight_count(&self) -> usize {
        self.layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Forward pass, returning activations per layer; the final entry is
    /// the logits vector.
    fn forward(&self, w: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len());
        acts.push(x.to_vec());
        let mut offset = 0;
        for (li, win) in self.layers.windows(2).enumerate() {
            let (nin, nout) = (win[0], win[1]);
            let weights = &w[offset..offset + nin * nout];
            let biases = &w[offset + nin * nout..offset + nin * nout + nout];
            offset += nin * nout + nout;
            let prev = &acts[li];
            let mut z = vec![0.0; nout];
            for o in 0..nout {
                let row = &weights[o * nin..(o + 1) * nin];
                z[o] = dot(row, prev) + biases[o];
            }
            let last = li + 2 == self.layers.len();
            if !last {
                for v in &mut z {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            acts.push(z);
        }
        acts
    }

    /// Loss and parameter gradient for one sample.
    fn backward(&self, w: &[f64], i: usize, grad: &mut [f64]) -> f64 {
        let x = self.input(i);
        let label = self.labels[i] as usize;
        let acts = self.forward(w, x);
        let logits = acts.last().unwrap();
        // softmax cross-entropy, max-subtracted
        let zmax = logits.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let mut expsum = 0.0;
        for z in logits {
            expsum += (z - zmax).exp();
        }
        let lse = zmax + expsum.ln();
        let loss = lse - logits[label];
        // delta at the output: softmax − one-hot
        let mut delta: Vec<f64> = logits.iter().map(|z| ((z - zmax).exp()) / expsum).collect();
        delta[label] -= 1.0;
        // walk the layers backwards
        let mut offsets = Vec::with_capacity(self.layers.len() - 1);
        let mut off = 0;
        for win in self.layers.windows(2) {
            offsets.push(off);
            off += win[0] * win[1] + win[1];
        }
        for li in (0..self.layers.len() - 1).rev() {
            let (nin, nout) = (self.layers[li], self.layers[li + 1]);
            let off = offsets[li];
            let prev = &acts[li];
            for o in 0..nout {
                let d = delta[o];
                if d != 0.0 {
                    let grow = &mut grad[off + o * nin..off + (o + 1) * nin];
                    linalg::axpy(d, prev, grow);
                    grad[off + nin * nout + o] += d;
                }
            }
            if li > 0 {
                let weights = &w[off..off + nin * nout];
                let mut next = vec![0.0; nin];
                for o in 0..nout {
                    let d = delta[o];
                    if d != 0.0 {
                        linalg::axpy(d, &weights[o * nin..(o + 1) * nin], &mut next);
                    }
                }
                // rectifier gate: zero where the activation was clipped
                for (v, a) in next.iter_mut().zip(&acts[li][..]) {
                    if *a <= 0.0 {
                        *v = 0.0;
                    }
                }
                delta = next;
            }
        }
        loss
    }
}

impl Objective for MlpModel {
    fn param_dim(&self) -> usize {
        self.weight_count()
    }

    fn sample_count(&self) -> usize {
        self.labels.len()
    }

    fn eval_batch(&self, w: &[f64], indices: &[usize]) -> Result<(f64, Vec<f64>), ObjectiveError> {
        if w.len() != self.param_dim() {
            return Err(ObjectiveError::DimensionMismatch { expected: self.param_dim(), got: w.len() });
        }
        let sorted = check_indices(indices, self.sample_count())?;
        let scale = 1.0 / sorted.len() as f64;
        let mut grad = vec![0.0; w.len()];
        let mut loss = 0.0;
        let mut sample_grad = vec![0.0; w.len()];
        for &i in &sorted {
            sample_grad.iter_mut().for_each(|v| *v = 0.0);
            loss += self.backward(w, i, &mut sample_grad);
            linalg::axpy(scale, &sample_grad, &mut grad);
        }
        Ok((loss * scale, grad))
    }

    fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = vec![0.0; self.param_dim()];
        let mut off = 0;
        for win in self.layers.windows(2) {
            let (nin, nout) = (win[0], win[1]);
            let bound = (6.0 / (nin + nout) as f64).sqrt();
            for v in &mut w[off..off + nin * nout] {
                *v = rng.gen_range(-bound..bound);
            }
            // biases start at zero
            off += nin * nout + nout;
        }
        w
    }

    fn accuracy(&self, w: &[f64], indices: &[usize]) -> Option<f64> {
        let mut correct = 0usize;
        for &i in indices {
            let acts = self.forward(w, self.input(i));
            let logits = acts.last().unwrap();
            let pred = logits
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(k, _)| k)
                .unwrap();
            if pred == self.labels[i] as usize {
                correct += 1;
            }
        }
        Some(100.0 * correct as f64 / indices.len().max(1) as f64)
    }
}

/// Maximum relative error between the analytic gradient and a central
/// finite difference over up to 50 randomly chosen coordinates.
pub fn fd_check(obj: &dyn Objective, w: &[f64], h: f64, seed: u64) -> f64 {
    assert!(h > 0.0);
    let n = obj.param_dim();
    let all: Vec<usize> = (0..obj.sample_count()).collect();
    let (_, grad) = obj.eval_batch(w, &all).expect("objective evaluates at w");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords: Vec<usize> = (0..n).collect();
    coords.shuffle(&mut rng);
    coords.truncate(50);
    let mut worst = 0.0_f64;
    let mut wp = w.to_vec();
    for &c in &coords {
        wp[c] = w[c] + h;
        let (fp, _) = obj.eval_batch(&wp, &all).unwrap();
        wp[c] = w[c] - h;
        let (fm, _) = obj.eval_batch(&wp, &all).unwrap();
        wp[c] = w[c];
        let fd = (fp - fm) / (2.0 * h);
        let denom = grad[c].abs().max(fd.abs());
        if denom < 1e-12 {
            continue;
        }
        worst = worst.max((grad[c] - fd).abs() / denom);
    }
    worst
}

/// Exact curvature pairs y = H·s for a quadratic with Hessian H.
pub fn quadratic_true_pairs(h: &SmallMatrix, steps: &[Vec<f64>]) -> Vec<(Vec<f64>, Vec<f64>)> {
    steps.iter().map(|s| (s.clone(), h.matvec(s))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_mlp(layers: Vec<usize>, samples: usize, seed: u64) -> MlpModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let din = layers[0];
        let classes = *layers.last().unwrap();
        let inputs: Vec<f64> = (0..samples * din).map(|_| rng.gen_range(0.0..1.0)).collect();
        let labels: Vec<u8> = (0..samples).map(|_| rng.gen_range(0..classes) as u8).collect();
        MlpModel::new(layers, inputs, labels)
    }

    #[test]
    fn quadratic_identity_values() {
        let obj = QuadraticObjective::new(SmallMatrix::identity(2), vec![0.0, 0.0], 4);
        let (f, g) = obj.eval_batch(&[3.0, 4.0], &[0, 2]).unwrap();
        assert!((f - 12.5).abs() < 1e-15);
        assert_eq!(g, vec![3.0, 4.0]);
    }

    #[test]
    fn index_range_is_checked() {
        let obj = QuadraticObjective::new(SmallMatrix::identity(2), vec![0.0, 0.0], 4);
        assert_eq!(
            obj.eval_batch(&[0.0, 0.0], &[4]).unwrap_err(),
            ObjectiveError::IndexOutOfRange { index: 4, count: 4 }
        );
    }

    #[test]
    fn mlp_uniform_logits_loss_is_ln_c() {
        let mlp = synthetic_mlp(vec![6, 4, 10], 12, 1);
        let mut w = mlp.init_params(7);
        // zero the final layer so every class gets the same logit
        let cut = 6 * 4 + 4;
        for v in &mut w[cut..] {
            *v = 0.0;
        }
        let (f, _) = eval_full(&mlp, &w).unwrap();
        assert!((f - 10.0_f64.ln()).abs() < 1e-12, "expected ln 10, got {f}");
    }

    #[test]
    fn mlp_batch_loss_is_mean_of_singles() {
        let mlp = synthetic_mlp(vec![5, 7, 3], 16, 2);
        let w = mlp.init_params(3);
        let idx: Vec<usize> = vec![1, 3, 4, 7, 9, 10, 12, 15];
        let (f, _) = mlp.eval_batch(&w, &idx).unwrap();
        let mut mean = 0.0;
        for &i in &idx {
            let (fi, _) = mlp.eval_batch(&w, &[i]).unwrap();
            mean += fi;
        }
        mean /= idx.len() as f64;
        assert!((f - mean).abs() < 1e-12);
    }

    #[test]
    fn mlp_duplicate_indices_leave_loss_unchanged() {
        let mlp = synthetic_mlp(vec![5, 6, 3], 10, 4);
        let w = mlp.init_params(5);
        let idx = vec![2, 5, 8];
        let (f1, _) = mlp.eval_batch(&w, &idx).unwrap();
        let doubled: Vec<usize> = idx.iter().chain(&idx).copied().collect();
        let (f2, _) = mlp.eval_batch(&w, &doubled).unwrap();
        assert!((f1 - f2).abs() < 1e-12);
    }

    #[test]
    fn fd_check_quadratic_is_tight() {
        let obj = QuadraticObjective::random_spd(10, 50.0, 9, 3);
        let w = obj.init_params(11);
        let err = fd_check(&obj, &w, 1e-5, 13);
        assert!(err < 1e-9, "quadratic fd error {err}");
    }

    #[test]
    fn fd_check_mlp_under_bound() {
        let mlp = synthetic_mlp(vec![8, 6, 4], 20, 6);
        let w = mlp.init_params(17);
        let err = fd_check(&mlp, &w, 1e-5, 19);
        assert!(err < 1e-5, "mlp fd error {err}");
    }

    #[test]
    fn fd_check_catches_corrupted_gradient() {
        struct Corrupted(MlpModel);
        impl Objective for Corrupted {
            fn param_dim(&self) -> usize {
                self.0.param_dim()
            }
            fn sample_count(&self) -> usize {
                self.0.sample_count()
            }
            fn eval_batch(
                &self,
                w: &[f64],
                idx: &[usize],
            ) -> Result<(f64, Vec<f64>), ObjectiveError> {
                let (f, mut g) = self.0.eval_batch(w, idx)?;
                let last = g.len() - 1;
                g[last] *= 2.0; // output bias doubled
                Ok((f, g))
            }
            fn init_params(&self, seed: u64) -> Vec<f64> {
                self.0.init_params(seed)
            }
        }
        let mlp = synthetic_mlp(vec![4, 5, 3], 15, 8);
        let obj = Corrupted(mlp);
        let w = obj.init_params(21);
        // coordinate 0 is a live first-layer weight; scan enough seeds that
        // the 50-coordinate sample hits it
        let mut worst = 0.0_f64;
        for seed in 0..4 {
            worst = worst.max(fd_check(&obj, &w, 1e-5, seed));
        }
        assert!(worst > 0.4, "corruption slipped through: {worst}");
    }

    #[test]
    fn quadratic_pairs_are_exact() {
        let h = SmallMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 2.0]]);
        let pairs = quadratic_true_pairs(&h, &[vec![0.0, 1.0]]);
        assert_eq!(pairs[0].1, vec![0.0, 2.0]);
        let hz = SmallMatrix::zeros(2, 2);
        let pairs = quadratic_true_pairs(&hz, &[vec![1.0, 1.0]]);
        assert_eq!(pairs[0].1, vec![0.0, 0.0]);
    }
}
