//! Training loops: deterministic and stochastic quasi-Newton trust-region
//! methods plus an Adam baseline on the same batch accounting.
//!
//! Every loop follows the same skeleton. Evaluate the (sub)sampled loss and
//! gradient, solve the trust-region subproblem for a step, evaluate the
//! trial point, accept when the reduction ratio clears τ₁, adjust the
//! radius, then test the curvature pair and rebuild the compact operator
//! when the pair is admissible. The first iteration takes the scaled
//! steepest-descent step because no curvature exists yet. Identical configs
//! and seeds reproduce the metrics stream bitwise, wall time aside.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hessian::{self, CompactHessian, HessianError, QnKind};
use crate::linalg::{self, norm};
use crate::objective::{eval_full, Objective, ObjectiveError};
use crate::pairs::{self, CurvaturePairBuffer, PairError, BFGS_CURVATURE_TAU, SR1_SKIP_TAU};
use crate::sampling::{self, ChunkEval, PointTag, SamplingError};
use crate::subproblem::{self, SolverError, SubproblemSolution, TrustRegionState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LbfgsTr,
    Lsr1Tr,
    SlbfgsTr,
    Slsr1Tr,
    Adam,
}

impl Method {
    pub fn qn_kind(&self) -> Option<QnKind> {
        match self {
            Method::LbfgsTr | Method::SlbfgsTr => Some(QnKind::Bfgs),
            Method::Lsr1Tr | Method::Slsr1Tr => Some(QnKind::Sr1),
            Method::Adam => None,
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, Method::SlbfgsTr | Method::Slsr1Tr | Method::Adam)
    }
}

fn default_memory() -> usize {
    20
}
fn default_epoch_max() -> usize {
    10
}
fn default_grad_tol() -> f64 {
    1e-5
}
fn default_one() -> f64 {
    1.0
}
fn default_tau1() -> f64 {
    1e-4
}
fn default_adam_lr() -> f64 {
    1e-3
}
fn default_adam_beta1() -> f64 {
    0.9
}
fn default_adam_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_true() -> bool {
    true
}
fn default_display() -> usize {
    1
}

/// Run configuration. Defaults follow the standard hyperparameters of the
/// methods: ε = 1e-5, ten epochs, γ₀ = δ₀ = 1, τ₁ = 1e-4, curvature τ of
/// 1e-2 for BFGS and 1e-8 for SR1, Adam with β₁ = 0.9, β₂ = 0.999 and
/// eps = 1e-8.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    #[serde(default = "default_memory")]
    pub memory: usize,
    /// Overlap chunk size os; the batch size is 2·os. Required by the
    /// stochastic methods.
    #[serde(default)]
    pub overlap: usize,
    #[serde(default = "default_epoch_max")]
    pub epoch_max: usize,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_one")]
    pub delta0: f64,
    #[serde(default = "default_one")]
    pub gamma0: f64,
    /// Curvature-pair threshold; per-method default when absent.
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default = "default_tau1")]
    pub tau1: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_adam_lr")]
    pub adam_lr: f64,
    #[serde(default = "default_adam_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_adam_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    /// Stop when the (stochastic) gradient norm falls under `grad_tol`.
    #[serde(default = "default_true")]
    pub grad_norm_stop: bool,
    /// Record metrics every this many iterations.
    #[serde(default = "default_display")]
    pub display_interval: usize,
}

impl TrainConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            memory: default_memory(),
            overlap: 0,
            epoch_max: default_epoch_max(),
            grad_tol: default_grad_tol(),
            delta0: 1.0,
            gamma0: 1.0,
            tau: None,
            tau1: default_tau1(),
            seed: 0,
            adam_lr: default_adam_lr(),
            adam_beta1: default_adam_beta1(),
            adam_beta2: default_adam_beta2(),
            adam_eps: default_adam_eps(),
            grad_norm_stop: true,
            display_interval: 1,
        }
    }

    pub fn curvature_tau(&self) -> f64 {
        self.tau.unwrap_or(match self.method.qn_kind() {
            Some(QnKind::Bfgs) => BFGS_CURVATURE_TAU,
            Some(QnKind::Sr1) => SR1_SKIP_TAU,
            None => BFGS_CURVATURE_TAU,
        })
    }
}

/// One metrics row. The CSV surface carries everything except `grad_norm`,
/// which exists for in-process inspection of the stop condition.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub iteration: usize,
    pub epoch: usize,
    pub wall_time_s: f64,
    pub train_loss: f64,
    pub train_acc: Option<f64>,
    pub test_loss: Option<f64>,
    pub test_acc: Option<f64>,
    pub delta: Option<f64>,
    pub rho: Option<f64>,
    pub gamma: Option<f64>,
    pub accepted: bool,
    pub pairs_stored: usize,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    GradConverged,
    BudgetExhausted,
    NonFiniteLoss,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub records: Vec<MetricsRecord>,
    pub outcome: RunOutcome,
    pub final_params: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("method {0:?} is not handled by this trainer")]
    WrongMethod(Method),
    #[error("stochastic methods need a positive overlap size")]
    MissingOverlap,
    #[error("subproblem solver failed after shrinking the pair history: {0}")]
    SolverHardFailure(SolverError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Hessian(#[from] HessianError),
    #[error(transparent)]
    Pair(#[from] PairError),
}

/// Compact-operator state shared by the quasi-Newton loops: the pair
/// buffer, the current seed scalar, and the built operator.
pub struct QnState {
    kind: QnKind,
    tau: f64,
    gamma: f64,
    buf: CurvaturePairBuffer,
    hessian: CompactHessian,
}

impl QnState {
    pub fn new(kind: QnKind, dim: usize, memory: usize, gamma0: f64, tau: f64) -> Self {
        Self {
            kind,
            tau,
            gamma: gamma0,
            buf: CurvaturePairBuffer::new(memory, dim),
            hessian: CompactHessian::seed(kind, gamma0, dim),
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn pairs_stored(&self) -> usize {
        self.buf.len()
    }

    pub fn hessian(&self) -> &CompactHessian {
        &self.hessian
    }

    pub fn buffer(&self) -> &CurvaturePairBuffer {
        &self.buf
    }

    /// Oldest pairs are shed until the factor is numerically trustworthy:
    /// column norms of Ψ decaying over many orders of magnitude pass the
    /// hard rank test yet leave R⁻¹ amplifying roundoff past the optimality
    /// certificates, so the guard here is stricter than the kernel's.
    const FACTOR_COND_TOL: f64 = 1e-8;

    fn rebuild(&mut self) -> Result<(), TrainError> {
        loop {
            if self.buf.is_empty() {
                self.hessian = CompactHessian::seed(self.kind, self.gamma, self.buf.dim());
                return Ok(());
            }
            let sel = match self.kind {
                QnKind::Bfgs => hessian::select_gamma_bfgs(&self.buf)?,
                QnKind::Sr1 => hessian::select_gamma_sr1(&self.buf)?,
            };
            self.gamma = sel.gamma;
            self.hessian = match self.kind {
                QnKind::Bfgs => hessian::build_bfgs(&self.buf, self.gamma)?,
                QnKind::Sr1 => hessian::build_sr1(&self.buf, self.gamma)?,
            };
            match linalg::thin_qr(self.hessian.psi()) {
                Ok((_, r)) => {
                    let m = r.rows();
                    let largest = (0..m).fold(0.0_f64, |a, j| a.max(r[(j, j)]));
                    let smallest = (0..m).fold(f64::INFINITY, |a, j| a.min(r[(j, j)]));
                    if m == 0 || smallest > Self::FACTOR_COND_TOL * largest {
                        return Ok(());
                    }
                }
                Err(linalg::LinalgError::RankDeficient) => {}
                Err(e) => return Err(HessianError::from(e).into()),
            }
            self.buf.drop_oldest();
        }
    }

    /// Tests the pair against the method's skip rule and, on acceptance,
    /// stores it and rebuilds the operator with a fresh seed scalar.
    /// Returns whether the pair was stored. A rejected pair leaves the
    /// operator untouched.
    pub fn observe(&mut self, s: &[f64], y: &[f64]) -> Result<bool, TrainError> {
        let ok = match self.kind {
            QnKind::Bfgs => pairs::accept_bfgs_pair(s, y, self.tau)?,
            QnKind::Sr1 => {
                let bs = self.hessian.apply(s)?;
                pairs::accept_sr1_pair(s, y, &bs, self.tau)?
            }
        };
        if ok {
            self.buf.push_pair(s, y)?;
            self.rebuild()?;
        }
        Ok(ok)
    }

    /// Solves the subproblem with the current operator. A rank-deficient
    /// factor sheds the oldest pairs until it becomes usable; stale or
    /// aligned steps otherwise wedge the run permanently, since the factor
    /// can only regain full rank by forgetting them. Failing with an empty
    /// buffer is a hard failure.
    pub fn solve(&mut self, g: &[f64], delta: f64) -> Result<SubproblemSolution, TrainError> {
        loop {
            let attempt = match self.kind {
                QnKind::Bfgs => subproblem::solve_subproblem_bfgs(&self.hessian, g, delta),
                QnKind::Sr1 => subproblem::solve_subproblem_sr1(&self.hessian, g, delta),
            };
            match attempt {
                Ok(sol) => return Ok(sol),
                Err(SolverError::Linalg(linalg::LinalgError::RankDeficient))
                | Err(SolverError::Hessian(HessianError::SingularMiddle))
                    if !self.buf.is_empty() =>
                {
                    self.buf.drop_oldest();
                    self.rebuild()?;
                }
                Err(SolverError::Linalg(linalg::LinalgError::RankDeficient)) => {
                    return Err(TrainError::SolverHardFailure(SolverError::Linalg(
                        linalg::LinalgError::RankDeficient,
                    )))
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}

struct MetricsSink<'a> {
    cfg: &'a TrainConfig,
    obj: &'a dyn Objective,
    test: Option<&'a dyn Objective>,
    start: Instant,
    all_train: Vec<usize>,
    all_test: Vec<usize>,
    records: Vec<MetricsRecord>,
}

impl<'a> MetricsSink<'a> {
    fn new(cfg: &'a TrainConfig, obj: &'a dyn Objective, test: Option<&'a dyn Objective>) -> Self {
        Self {
            cfg,
            obj,
            test,
            start: Instant::now(),
            all_train: (0..obj.sample_count()).collect(),
            all_test: test.map(|t| (0..t.sample_count()).collect()).unwrap_or_default(),
            records: Vec::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        iteration: usize,
        epoch: usize,
        w: &[f64],
        delta: Option<f64>,
        rho: Option<f64>,
        gamma: Option<f64>,
        accepted: bool,
        pairs_stored: usize,
        grad_norm: f64,
    ) -> Result<(), TrainError> {
        if iteration % self.cfg.display_interval != 0 {
            return Ok(());
        }
        let (train_loss, _) = self.obj.eval_batch(w, &self.all_train)?;
        let train_acc = self.obj.accuracy(w, &self.all_train);
        let (test_loss, test_acc) = match self.test {
            Some(t) => {
                let (l, _) = t.eval_batch(w, &self.all_test)?;
                (Some(l), t.accuracy(w, &self.all_test))
            }
            None => (None, None),
        };
        self.records.push(MetricsRecord {
            iteration,
            epoch,
            wall_time_s: self.start.elapsed().as_secs_f64(),
            train_loss,
            train_acc,
            test_loss,
            test_acc,
            delta,
            rho,
            gamma,
            accepted,
            pairs_stored,
            grad_norm,
        });
        Ok(())
    }

    fn push_diagnostic(&mut self, iteration: usize, epoch: usize, loss: f64, grad_norm: f64) {
        self.records.push(MetricsRecord {
            iteration,
            epoch,
            wall_time_s: self.start.elapsed().as_secs_f64(),
            train_loss: loss,
            train_acc: None,
            test_loss: None,
            test_acc: None,
            delta: None,
            rho: None,
            gamma: None,
            accepted: false,
            pairs_stored: 0,
            grad_norm,
        });
    }
}

fn steepest_descent_step(
    hess: &CompactHessian,
    g: &[f64],
    gnorm: f64,
    delta: f64,
) -> Result<SubproblemSolution, TrainError> {
    let p: Vec<f64> = g.iter().map(|x| -delta * x / gnorm).collect();
    let q = subproblem::q_value(hess, g, &p)?;
    Ok(SubproblemSolution { p, sigma: 0.0, q_value: q, on_boundary: true, hard_case: false })
}

fn finite(loss: f64, grad: &[f64]) -> bool {
    loss.is_finite() && grad.iter().all(|x| x.is_finite())
}

/// Full-batch L-BFGS-TR / L-SR1-TR. One iteration is one pass over the
/// data, so the epoch budget doubles as the iteration budget.
pub fn train_deterministic(
    cfg: &TrainConfig,
    obj: &dyn Objective,
    test: Option<&dyn Objective>,
) -> Result<TrainReport, TrainError> {
    let kind = match cfg.method {
        Method::LbfgsTr | Method::Lsr1Tr => cfg.method.qn_kind().unwrap(),
        other => return Err(TrainError::WrongMethod(other)),
    };
    let mut w = obj.init_params(cfg.seed);
    let mut qn = QnState::new(kind, w.len(), cfg.memory, cfg.gamma0, cfg.curvature_tau());
    let mut tr = TrustRegionState { delta: cfg.delta0, tau1: cfg.tau1, ..Default::default() };
    let mut sink = MetricsSink::new(cfg, obj, test);
    let (mut f, mut g) = eval_full(obj, &w)?;
    if !finite(f, &g) {
        sink.push_diagnostic(0, 0, f, f64::NAN);
        return Ok(TrainReport { records: sink.records, outcome: RunOutcome::NonFiniteLoss, final_params: w });
    }
    let mut outcome = RunOutcome::BudgetExhausted;
    for k in 0..cfg.epoch_max {
        let gnorm = norm(&g);
        if cfg.grad_norm_stop && gnorm <= cfg.grad_tol {
            outcome = RunOutcome::GradConverged;
            break;
        }
        let sol = if k == 0 {
            steepest_descent_step(qn.hessian(), &g, gnorm, tr.delta)?
        } else {
            qn.solve(&g, tr.delta)?
        };
        let wt: Vec<f64> = w.iter().zip(&sol.p).map(|(a, b)| a + b).collect();
        let (ft, gt) = eval_full(obj, &wt)?;
        if !finite(ft, &gt) {
            sink.push_diagnostic(k, k, ft, gnorm);
            outcome = RunOutcome::NonFiniteLoss;
            break;
        }
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let rho_val = match subproblem::rho(f, ft, sol.q_value) {
            Ok(r) => r,
            Err(SolverError::ZeroPrediction) => {
                // the model admits no decrease: stationary for the operator
                outcome = RunOutcome::GradConverged;
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let accepted = rho_val >= tr.tau1;
        tr = subproblem::adjust_radius(&tr, rho_val, norm(&sol.p));
        if accepted {
            w = wt;
            f = ft;
            g = gt;
        }
        qn.observe(&sol.p, &y)?;
        sink.record(
            k,
            k,
            &w,
            Some(tr.delta),
            Some(rho_val),
            Some(qn.gamma()),
            accepted,
            qn.pairs_stored(),
            gnorm,
        )?;
    }
    Ok(TrainReport { records: sink.records, outcome, final_params: w })
}

/// Stochastic sL-BFGS-TR / sL-SR1-TR over half-overlap multi-batches.
/// Each epoch reshuffles and replans; the first batch of an epoch
/// evaluates both of its chunks fresh, later batches reuse the shared
/// chunk evaluation carried over from the previous iteration.
pub fn train_stochastic(
    cfg: &TrainConfig,
    obj: &dyn Objective,
    test: Option<&dyn Objective>,
) -> Result<TrainReport, TrainError> {
    let kind = match cfg.method {
        Method::SlbfgsTr | Method::Slsr1Tr => cfg.method.qn_kind().unwrap(),
        other => return Err(TrainError::WrongMethod(other)),
    };
    if cfg.overlap == 0 {
        return Err(TrainError::MissingOverlap);
    }
    let n_samples = obj.sample_count();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut w = obj.init_params(cfg.seed);
    let mut qn = QnState::new(kind, w.len(), cfg.memory, cfg.gamma0, cfg.curvature_tau());
    let mut tr = TrustRegionState { delta: cfg.delta0, tau1: cfg.tau1, ..Default::default() };
    let mut sink = MetricsSink::new(cfg, obj, test);
    let mut outcome = RunOutcome::BudgetExhausted;
    let mut k_global = 0usize;

    'epochs: for epoch in 0..cfg.epoch_max {
        let plan = sampling::plan_epoch(n_samples, cfg.overlap, &mut shuffle_rng)?;
        let rem_id = plan.chunk_count();
        let mut cache: Option<ChunkEval> = None;
        for j in 0..plan.batch_count() {
            let eval_chunk = |w: &[f64], idx: &[usize], id: usize, tag: PointTag| -> Result<ChunkEval, TrainError> {
                let (loss, grad) = obj.eval_batch(w, idx)?;
                Ok(ChunkEval { chunk_id: id, loss, grad, at_point: tag })
            };
            let prev_eval = match cache.take() {
                Some(c) if c.chunk_id == j => ChunkEval { at_point: PointTag::Current, ..c },
                _ => eval_chunk(&w, plan.chunk(j), j, PointTag::Current)?,
            };
            let next_eval = eval_chunk(&w, plan.chunk(j + 1), j + 1, PointTag::Current)?;
            let rem_eval = if plan.is_triple(j) {
                Some(eval_chunk(&w, plan.remainder().unwrap(), rem_id, PointTag::Current)?)
            } else {
                None
            };
            let (f_k, g_k) = match &rem_eval {
                Some(r) => sampling::aggregate_triple(&prev_eval, r, &next_eval, cfg.overlap, n_samples % cfg.overlap)?,
                None => sampling::aggregate_duplex(&prev_eval, &next_eval)?,
            };
            if !finite(f_k, &g_k) {
                sink.push_diagnostic(k_global, epoch, f_k, f64::NAN);
                outcome = RunOutcome::NonFiniteLoss;
                break 'epochs;
            }
            let gnorm = norm(&g_k);
            if cfg.grad_norm_stop && gnorm <= cfg.grad_tol {
                outcome = RunOutcome::GradConverged;
                break 'epochs;
            }
            let sol = if k_global == 0 {
                steepest_descent_step(qn.hessian(), &g_k, gnorm, tr.delta)?
            } else {
                qn.solve(&g_k, tr.delta)?
            };
            let wt: Vec<f64> = w.iter().zip(&sol.p).map(|(a, b)| a + b).collect();
            let t_prev = eval_chunk(&wt, plan.chunk(j), j, PointTag::Trial)?;
            let t_next = eval_chunk(&wt, plan.chunk(j + 1), j + 1, PointTag::Trial)?;
            let t_rem = if plan.is_triple(j) {
                Some(eval_chunk(&wt, plan.remainder().unwrap(), rem_id, PointTag::Trial)?)
            } else {
                None
            };
            let (f_t, g_t) = match &t_rem {
                Some(r) => sampling::aggregate_triple(&t_prev, r, &t_next, cfg.overlap, n_samples % cfg.overlap)?,
                None => sampling::aggregate_duplex(&t_prev, &t_next)?,
            };
            if !finite(f_t, &g_t) {
                sink.push_diagnostic(k_global, epoch, f_t, gnorm);
                outcome = RunOutcome::NonFiniteLoss;
                break 'epochs;
            }
            let y: Vec<f64> = g_t.iter().zip(&g_k).map(|(a, b)| a - b).collect();
            let rho_val = match subproblem::rho(f_k, f_t, sol.q_value) {
                Ok(r) => r,
                Err(SolverError::ZeroPrediction) => {
                    outcome = RunOutcome::GradConverged;
                    break 'epochs;
                }
                Err(e) => return Err(e.into()),
            };
            let accepted = rho_val >= tr.tau1;
            tr = subproblem::adjust_radius(&tr, rho_val, norm(&sol.p));
            if accepted {
                w = wt;
            }
            qn.observe(&sol.p, &y)?;
            cache = Some(sampling::carry_cache(&plan, j, accepted, Some(t_next), Some(next_eval))?);
            sink.record(
                k_global,
                epoch,
                &w,
                Some(tr.delta),
                Some(rho_val),
                Some(qn.gamma()),
                accepted,
                qn.pairs_stored(),
                gnorm,
            )?;
            k_global += 1;
        }
    }
    Ok(TrainReport { records: sink.records, outcome, final_params: w })
}

/// Adam on plain non-overlapping batches of size 2·os, so the per-epoch
/// data accounting matches the overlap trainers.
pub fn train_adam(
    cfg: &TrainConfig,
    obj: &dyn Objective,
    test: Option<&dyn Objective>,
) -> Result<TrainReport, TrainError> {
    if cfg.method != Method::Adam {
        return Err(TrainError::WrongMethod(cfg.method));
    }
    if cfg.overlap == 0 {
        return Err(TrainError::MissingOverlap);
    }
    let bs = 2 * cfg.overlap;
    let n_samples = obj.sample_count();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut w = obj.init_params(cfg.seed);
    let mut sink = MetricsSink::new(cfg, obj, test);
    let mut m = vec![0.0; w.len()];
    let mut v = vec![0.0; w.len()];
    let mut outcome = RunOutcome::BudgetExhausted;
    let mut step = 0usize;
    let mut k_global = 0usize;

    'epochs: for epoch in 0..cfg.epoch_max {
        let mut perm: Vec<usize> = (0..n_samples).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut shuffle_rng);
        for batch in perm.chunks(bs) {
            let (f, g) = obj.eval_batch(&w, batch)?;
            if !finite(f, &g) {
                sink.push_diagnostic(k_global, epoch, f, f64::NAN);
                outcome = RunOutcome::NonFiniteLoss;
                break 'epochs;
            }
            let gnorm = norm(&g);
            if cfg.grad_norm_stop && gnorm <= cfg.grad_tol {
                outcome = RunOutcome::GradConverged;
                break 'epochs;
            }
            step += 1;
            let bc1 = 1.0 - cfg.adam_beta1.powi(step as i32);
            let bc2 = 1.0 - cfg.adam_beta2.powi(step as i32);
            for i in 0..w.len() {
                m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
                v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                w[i] -= cfg.adam_lr * mhat / (vhat.sqrt() + cfg.adam_eps);
            }
            sink.record(k_global, epoch, &w, None, None, None, true, 0, gnorm)?;
            k_global += 1;
        }
    }
    Ok(TrainReport { records: sink.records, outcome, final_params: w })
}

/// Dispatches to the trainer matching the configured method.
pub fn train(
    cfg: &TrainConfig,
    obj: &dyn Objective,
    test: Option<&dyn Objective>,
) -> Result<TrainReport, TrainError> {
    match cfg.method {
        Method::LbfgsTr | Method::Lsr1Tr => train_deterministic(cfg, obj, test),
        Method::SlbfgsTr | Method::Slsr1Tr => train_stochastic(cfg, obj, test),
        Method::Adam => train_adam(cfg, obj, test),
    }
}
