//! Limited-memory quasi-Newton trust-region optimization toolkit.
//!
//! The crate implements compact L-BFGS and L-SR1 Hessian approximations, an
//! exact trust-region subproblem solver built on an orthonormal-basis
//! spectral decomposition of the compact factors (including the SR1 hard
//! case), half-overlap multi-batch sampling, and deterministic plus
//! stochastic training loops with an Adam baseline. A dense reference
//! solver backs the fuzzing harness and the test suite.

pub mod cli;
pub mod hessian;
pub mod idx;
pub mod linalg;
pub mod objective;
pub mod oracle;
pub mod pairs;
pub mod sampling;
pub mod subproblem;
pub mod train;

pub use hessian::{CompactHessian, GammaResult, QnKind};
pub use linalg::{SmallMatrix, TallMatrix};
pub use objective::{MlpModel, Objective, QuadraticObjective};
pub use pairs::CurvaturePairBuffer;
pub use sampling::EpochPlan;
pub use subproblem::{SpectralFactors, SubproblemSolution, TrustRegionState};
pub use train::{Method, MetricsRecord, TrainConfig, TrainReport};
