use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector, SVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sprs::{FillInReduction, SymmetryCheck, TriMat};
use sprs_ldl::Ldl;

use super::graph::{Graph, Prior, Values};
use crate::alignment::{EdgeMeasurement, VarId};
use crate::error::{Error, Result};
use crate::geometry::{Matrix15, Sl4, Tangent15, DOF};

pub type Residual = SVector<f64, DOF>;

/// Step for central finite differences on tangent coordinates.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    FiniteDifference,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolverKind {
    Dense,
    Sparse,
    /// Dense up to [`AUTO_DENSE_LIMIT`] unknowns, sparse beyond.
    Auto,
}

pub const AUTO_DENSE_LIMIT: usize = 600;

fn whiten(raw: Tangent15, sigma: &SVector<f64, DOF>) -> Residual {
    raw.0.component_div(sigma)
}

/// Whitened between-factor residual `log(h_meas⁻¹ · h_i⁻¹ · h_j) ⊘ σ`.
pub fn residual(e: &EdgeMeasurement, h_i: &Sl4, h_j: &Sl4) -> Result<Residual> {
    let err = e.h_meas.inverse() * h_i.inverse() * *h_j;
    Ok(whiten(err.log()?, &e.sigma))
}

/// Whitened prior residual `log(value⁻¹ · h) ⊘ σ`.
pub fn prior_residual(p: &Prior, h: &Sl4) -> Result<Residual> {
    Ok(whiten((p.value.inverse() * *h).log()?, &p.sigma))
}

/// A linearized factor: residual plus one Jacobian block per touched variable.
#[derive(Debug, Clone)]
pub struct FactorJacobian {
    pub residual: Residual,
    pub blocks: Vec<(VarId, Matrix15)>,
}

fn fd_block(f: impl Fn(&Tangent15) -> Result<Residual>) -> Result<Matrix15> {
    let mut j = Matrix15::zeros();
    for k in 0..DOF {
        let plus = f(&Tangent15::unit(k, FD_STEP))?;
        let minus = f(&Tangent15::unit(k, -FD_STEP))?;
        j.set_column(k, &((plus - minus) / (2.0 * FD_STEP)));
    }
    Ok(j)
}

fn row_whitened(m: Matrix15, sigma: &SVector<f64, DOF>) -> Matrix15 {
    let mut out = m;
    for r in 0..DOF {
        out.row_mut(r).scale_mut(1.0 / sigma[r]);
    }
    out
}

pub fn linearize_between(
    e: &EdgeMeasurement,
    h_i: &Sl4,
    h_j: &Sl4,
    mode: JacobianMode,
) -> Result<FactorJacobian> {
    let r = residual(e, h_i, h_j)?;
    let (ji, jj) = match mode {
        JacobianMode::FiniteDifference => (
            fd_block(|d| residual(e, &h_i.retract(d), h_j))?,
            fd_block(|d| residual(e, h_i, &h_j.retract(d)))?,
        ),
        JacobianMode::Analytic => {
            // E = M⁻¹·h_i⁻¹·h_j. Right-perturbing h_j gives E·exp(ξ); right-perturbing
            // h_i gives E·exp(−Ad(h_j⁻¹·h_i)·ξ).
            let raw = Tangent15(r.component_mul(&e.sigma));
            let jr_inv = raw
                .right_jacobian_inv()
                .ok_or_else(|| Error::LogDivergence("singular right Jacobian".into()))?;
            let ad = (h_j.inverse() * *h_i).adjoint();
            (
                row_whitened(-jr_inv * ad, &e.sigma),
                row_whitened(jr_inv, &e.sigma),
            )
        }
    };
    Ok(FactorJacobian {
        residual: r,
        blocks: vec![(e.var_i, ji), (e.var_j, jj)],
    })
}

pub fn linearize_prior(p: &Prior, h: &Sl4, mode: JacobianMode) -> Result<FactorJacobian> {
    let r = prior_residual(p, h)?;
    let j = match mode {
        JacobianMode::FiniteDifference => fd_block(|d| prior_residual(p, &h.retract(d)))?,
        JacobianMode::Analytic => {
            let raw = Tangent15(r.component_mul(&p.sigma));
            let jr_inv = raw
                .right_jacobian_inv()
                .ok_or_else(|| Error::LogDivergence("singular right Jacobian".into()))?;
            row_whitened(jr_inv, &p.sigma)
        }
    };
    Ok(FactorJacobian {
        residual: r,
        blocks: vec![(p.var, j)],
    })
}

/// Sum of squared whitened residuals over all factors.
pub fn total_cost(graph: &Graph, values: &Values) -> Result<f64> {
    let between: Result<Vec<f64>> = graph
        .betweens()
        .par_iter()
        .map(|e| Ok(residual(e, values.value(e.var_i), values.value(e.var_j))?.norm_squared()))
        .collect();
    let prior: Result<Vec<f64>> = graph
        .priors()
        .iter()
        .map(|p| Ok(prior_residual(p, values.value(p.var))?.norm_squared()))
        .collect();
    Ok(between?.iter().sum::<f64>() + prior?.iter().sum::<f64>())
}

/// Gauss-Newton normal equations `H·δ = −g` in 15×15 blocks.
///
/// Variables are ordered by id; block `(a, b)` is stored for `a ≤ b` only.
#[derive(Debug, Clone)]
pub struct NormalSystem {
    pub order: Vec<VarId>,
    pub blocks: BTreeMap<(usize, usize), Matrix15>,
    pub gradient: DVector<f64>,
    pub cost: f64,
}

/// Linearizes every factor (in parallel) and assembles in a fixed order.
pub fn linearize(graph: &Graph, values: &Values, mode: JacobianMode) -> Result<NormalSystem> {
    values.covers(graph)?;
    let order: Vec<VarId> = graph.variables().iter().copied().collect();
    let index: HashMap<VarId, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let factors: Result<Vec<FactorJacobian>> = graph
        .betweens()
        .par_iter()
        .map(|e| linearize_between(e, values.value(e.var_i), values.value(e.var_j), mode))
        .chain(
            graph
                .priors()
                .par_iter()
                .map(|p| linearize_prior(p, values.value(p.var), mode)),
        )
        .collect();
    let mut blocks: BTreeMap<(usize, usize), Matrix15> = BTreeMap::new();
    let mut gradient = DVector::zeros(order.len() * DOF);
    let mut cost = 0.0;
    for f in factors? {
        cost += f.residual.norm_squared();
        for (a, (va, ja)) in f.blocks.iter().enumerate() {
            let ia = index[va];
            let g = ja.transpose() * f.residual;
            let mut seg = gradient.fixed_rows_mut::<DOF>(ia * DOF);
            seg += g;
            for (vb, jb) in &f.blocks[a..] {
                let ib = index[vb];
                let (r, c, block) = if ia <= ib {
                    (ia, ib, ja.transpose() * jb)
                } else {
                    (ib, ia, jb.transpose() * ja)
                };
                *blocks.entry((r, c)).or_insert_with(Matrix15::zeros) += block;
            }
        }
    }
    Ok(NormalSystem {
        order,
        blocks,
        gradient,
        cost,
    })
}

impl NormalSystem {
    pub fn dim(&self) -> usize {
        self.order.len() * DOF
    }

    /// Full symmetric Hessian approximation `JᵀJ`.
    pub fn dense_hessian(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut h = DMatrix::zeros(n, n);
        for (&(a, b), blk) in &self.blocks {
            h.view_mut((a * DOF, b * DOF), (DOF, DOF)).copy_from(blk);
            if a != b {
                h.view_mut((b * DOF, a * DOF), (DOF, DOF))
                    .copy_from(&blk.transpose());
            }
        }
        h
    }

    fn damping(&self, lambda: f64) -> DVector<f64> {
        let mut diag = DVector::zeros(self.dim());
        for i in 0..self.order.len() {
            if let Some(blk) = self.blocks.get(&(i, i)) {
                for k in 0..DOF {
                    diag[i * DOF + k] = blk[(k, k)];
                }
            }
        }
        let floor = diag.amax() * 1e-15;
        diag.map(|d| lambda * d.max(floor))
    }

    /// Solves `(H + λ·diag(H))·δ = −g`. `None` when the damped matrix is not
    /// numerically positive definite.
    pub fn solve(&self, lambda: f64, kind: LinearSolverKind) -> Option<DVector<f64>> {
        let n = self.dim();
        let kind = match kind {
            LinearSolverKind::Auto if n <= AUTO_DENSE_LIMIT => LinearSolverKind::Dense,
            LinearSolverKind::Auto => LinearSolverKind::Sparse,
            k => k,
        };
        let damping = self.damping(lambda);
        let rhs = -&self.gradient;
        let step = match kind {
            LinearSolverKind::Dense => {
                let mut h = self.dense_hessian();
                for i in 0..n {
                    h[(i, i)] += damping[i];
                }
                h.cholesky()?.solve(&rhs)
            }
            _ => {
                let mut tri = TriMat::new((n, n));
                for (&(a, b), blk) in &self.blocks {
                    for r in 0..DOF {
                        for c in 0..DOF {
                            let v = blk[(r, c)];
                            if v == 0.0 {
                                continue;
                            }
                            tri.add_triplet(a * DOF + r, b * DOF + c, v);
                            if a != b {
                                tri.add_triplet(b * DOF + c, a * DOF + r, v);
                            }
                        }
                    }
                }
                for (i, d) in damping.iter().enumerate() {
                    tri.add_triplet(i, i, *d);
                }
                let csc = tri.to_csc::<usize>();
                // Loop edges tie distant variables; a bandwidth-reducing order keeps fill-in low.
                let ldl = Ldl::new()
                    .fill_in_reduction(FillInReduction::ReverseCuthillMcKee)
                    .check_symmetry(SymmetryCheck::DontCheckSymmetry)
                    .numeric(csc.view())
                    .ok()?;
                if ldl.d().iter().any(|d| !(*d > 0.0)) {
                    return None;
                }
                DVector::from_vec(ldl.solve(rhs.as_slice().to_vec()))
            }
        };
        step.iter().all(|v| v.is_finite()).then_some(step)
    }
}

/// Numerical rank of a symmetric matrix (relative eigenvalue tolerance).
pub fn symmetric_rank(h: &DMatrix<f64>, rel_tol: f64) -> usize {
    let eig = h.clone().symmetric_eigen();
    let max = eig.eigenvalues.amax();
    eig.eigenvalues
        .iter()
        .filter(|&&e| e > rel_tol * max)
        .count()
}
