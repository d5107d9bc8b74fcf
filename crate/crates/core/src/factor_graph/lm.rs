use serde::{Deserialize, Serialize};

use super::graph::{Graph, Values};
use super::linearize::{linearize, total_cost, JacobianMode, LinearSolverKind};
use crate::error::{Error, Result};
use crate::geometry::{Tangent15, DOF};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub initial_lambda: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub max_lambda: f64,
    pub max_iters: usize,
    pub rel_cost_tol: f64,
    pub step_tol: f64,
    /// Costs below this are treated as an exact fit.
    pub abs_cost_tol: f64,
    pub jacobian: JacobianMode,
    pub solver: LinearSolverKind,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            initial_lambda: 1e-4,
            lambda_up: 10.0,
            lambda_down: 10.0,
            max_lambda: 1e16,
            max_iters: 100,
            rel_cost_tol: 1e-9,
            step_tol: 1e-10,
            abs_cost_tol: 1e-28,
            jacobian: JacobianMode::FiniteDifference,
            solver: LinearSolverKind::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    /// Accepted steps only.
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub converged: bool,
    pub lambda_final: f64,
}

fn apply_step(values: &Values, order: &[usize], step: &nalgebra::DVector<f64>) -> Values {
    order
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let xi = Tangent15::from_slice(step.rows(i * DOF, DOF).as_slice());
            (v, values.value(v).retract(&xi))
        })
        .collect()
}

/// Levenberg-Marquardt on the product manifold with right retraction.
pub fn optimize_lm(
    graph: &Graph,
    init: &Values,
    cfg: &LmConfig,
) -> Result<(Values, OptimizerReport)> {
    graph.validate()?;
    init.covers(graph)?;
    let mut values = init.clone();
    let mut lambda = cfg.initial_lambda;
    let mut system = linearize(graph, &values, cfg.jacobian)?;
    let initial_cost = system.cost;
    let mut iterations = 0;
    let mut converged = false;
    let mut last_failure_diverged = false;

    while iterations < cfg.max_iters {
        if system.cost < cfg.abs_cost_tol {
            converged = true;
            break;
        }
        if lambda > cfg.max_lambda {
            if last_failure_diverged {
                return Err(Error::LogDivergence(format!(
                    "no acceptable step with damping up to {:e}",
                    cfg.max_lambda
                )));
            }
            // Damping saturated without divergence: no descent direction is left.
            converged = true;
            break;
        }
        let Some(step) = system.solve(lambda, cfg.solver) else {
            last_failure_diverged = false;
            lambda *= cfg.lambda_up;
            continue;
        };
        let candidate = apply_step(&values, &system.order, &step);
        let cost = match total_cost(graph, &candidate) {
            Ok(c) if c.is_finite() => c,
            _ => {
                last_failure_diverged = true;
                lambda *= cfg.lambda_up;
                continue;
            }
        };
        if cost >= system.cost {
            last_failure_diverged = false;
            lambda *= cfg.lambda_up;
            continue;
        }
        let prev_cost = system.cost;
        values = candidate;
        iterations += 1;
        lambda = (lambda / cfg.lambda_down).max(f64::MIN_POSITIVE);
        system = linearize(graph, &values, cfg.jacobian)?;
        if (prev_cost - system.cost) / prev_cost < cfg.rel_cost_tol || step.norm() < cfg.step_tol {
            converged = true;
            break;
        }
    }
    if system.cost < cfg.abs_cost_tol {
        converged = true;
    }
    let report = OptimizerReport {
        iterations,
        initial_cost,
        final_cost: system.cost,
        converged,
        lambda_final: lambda,
    };
    Ok((values, report))
}
