//! Nonlinear least squares over SL(4) variables.
mod graph;
mod linearize;
mod lm;

pub use graph::{Graph, Prior, Values, ANCHOR_SIGMA};
pub use linearize::{
    linearize, linearize_between, linearize_prior, prior_residual, residual, symmetric_rank,
    total_cost, FactorJacobian, JacobianMode, LinearSolverKind, NormalSystem, Residual,
    AUTO_DENSE_LIMIT, FD_STEP,
};
pub use lm::{optimize_lm, LmConfig, OptimizerReport};
