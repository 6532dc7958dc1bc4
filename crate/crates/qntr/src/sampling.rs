//! Half-overlap multi-batch sampling.
//!
//! An epoch plan shuffles the sample indices once and slices them into
//! disjoint chunks of size `os`. Batch k is the union of chunks k and k+1,
//! so consecutive batches share exactly one chunk and a fixed batch size
//! comes with one reusable chunk evaluation per iteration. When the sample
//! count is not a multiple of the chunk size, the leftover indices ride
//! along with the final batch as a remainder set.

use rand::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SamplingError {
    #[error("need at least 2·os samples, got {n} with os = {os}")]
    TooFewSamples { n: usize, os: usize },
    #[error("chunk evaluations taken at different points")]
    PointMismatch,
    #[error("missing chunk evaluation for chunk {chunk_id}")]
    MissingEval { chunk_id: usize },
}

/// Which iterate a chunk evaluation was taken at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointTag {
    Current,
    Trial,
}

/// Loss and gradient of one chunk at one point.
#[derive(Debug, Clone)]
pub struct ChunkEval {
    pub chunk_id: usize,
    pub loss: f64,
    pub grad: Vec<f64>,
    pub at_point: PointTag,
}

/// One epoch worth of overlap chunks. `batch_count` batches are formed
/// from `batch_count + 1` chunks; batch k unions chunks k and k+1, and the
/// final batch absorbs the remainder when one exists.
#[derive(Debug, Clone)]
pub struct EpochPlan {
    chunk_size: usize,
    batch_count: usize,
    chunks: Vec<Vec<usize>>,
    remainder: Option<Vec<usize>>,
}

impl EpochPlan {
    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    /// Number of batches in the epoch, ⌊N/os⌋ − 1.
    pub fn batch_count(&self) -> usize {
        self.batch_count
    }

    pub fn chunk(&self, i: usize) -> &[usize] {
        &self.chunks[i]
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn remainder(&self) -> Option<&[usize]> {
        self.remainder.as_deref()
    }

    /// True when batch `k` is the final triple batch carrying the
    /// remainder.
    pub fn is_triple(&self, k: usize) -> bool {
        self.remainder.is_some() && k + 1 == self.batch_count
    }

    /// All indices of batch `k`: chunks k and k+1 plus the remainder on the
    /// final batch when one exists.
    pub fn batch_indices(&self, k: usize) -> Vec<usize> {
        assert!(k < self.batch_count);
        let mut out = self.chunks[k].clone();
        if self.is_triple(k) {
            out.extend_from_slice(self.remainder.as_ref().unwrap());
        }
        out.extend_from_slice(&self.chunks[k + 1]);
        out
    }
}

/// Shuffles `n` indices without replacement and slices them into an epoch
/// plan with chunk size `os`.
pub fn plan_epoch<R: Rng + ?Sized>(n: usize, os: usize, rng: &mut R) -> Result<EpochPlan, SamplingError> {
    if os == 0 || n < 2 * os {
        return Err(SamplingError::TooFewSamples { n, os });
    }
    let batch_count = n / os - 1;
    let chunk_count = batch_count + 1;
    let rs = n % os;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let chunks: Vec<Vec<usize>> = (0..chunk_count)
        .map(|c| perm[c * os..(c + 1) * os].to_vec())
        .collect();
    let remainder = if rs == 0 { None } else { Some(perm[chunk_count * os..].to_vec()) };
    Ok(EpochPlan { chunk_size: os, batch_count, chunks, remainder })
}

/// Combines the two chunk evaluations of a duplex batch with the overlap
/// ratio 1/2.
pub fn aggregate_duplex(prev: &ChunkEval, next: &ChunkEval) -> Result<(f64, Vec<f64>), SamplingError> {
    if prev.at_point != next.at_point {
        return Err(SamplingError::PointMismatch);
    }
    let loss = 0.5 * (prev.loss + next.loss);
    let grad: Vec<f64> = prev.grad.iter().zip(&next.grad).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok((loss, grad))
}

/// Combines the three evaluations of the final triple batch with the
/// overlap ratio os/(2·os + rs); the remainder gets the complementary
/// weight 1 − 2·or.
pub fn aggregate_triple(
    prev: &ChunkEval,
    rem: &ChunkEval,
    next: &ChunkEval,
    os: usize,
    rs: usize,
) -> Result<(f64, Vec<f64>), SamplingError> {
    assert!(rs >= 1, "triple batches require a nonempty remainder");
    if prev.at_point != next.at_point || prev.at_point != rem.at_point {
        return Err(SamplingError::PointMismatch);
    }
    let or = os as f64 / (2 * os + rs) as f64;
    let wr = 1.0 - 2.0 * or;
    let loss = or * (prev.loss + next.loss) + wr * rem.loss;
    let grad: Vec<f64> = prev
        .grad
        .iter()
        .zip(&next.grad)
        .zip(&rem.grad)
        .map(|((a, b), r)| or * (a + b) + wr * r)
        .collect();
    Ok((loss, grad))
}

/// Picks the evaluation of the shared chunk to reuse at the next
/// iteration: the trial-point evaluation when the step was accepted, the
/// current-point evaluation otherwise.
pub fn carry_cache(
    plan: &EpochPlan,
    k: usize,
    accepted: bool,
    trial_next: Option<ChunkEval>,
    current_next: Option<ChunkEval>,
) -> Result<ChunkEval, SamplingError> {
    let shared = k + 1;
    assert!(k < plan.batch_count());
    let pick = |ev: Option<ChunkEval>, tag: PointTag| -> Result<ChunkEval, SamplingError> {
        let ev = ev.ok_or(SamplingError::MissingEval { chunk_id: shared })?;
        if ev.chunk_id != shared {
            return Err(SamplingError::MissingEval { chunk_id: shared });
        }
        if ev.at_point != tag {
            return Err(SamplingError::PointMismatch);
        }
        Ok(ev)
    };
    if accepted {
        pick(trial_next, PointTag::Trial)
    } else {
        pick(current_next, PointTag::Current)
    }
}
