//! Edge measurements between keyframe variables.
//!
//! Intra edges carry the frontend's relative SE(3) pose between consecutive
//! keyframes of one submap. Inter edges tie the two submap estimates of a
//! shared frame; their measurement is pure calibration ratio plus scale,
//!
//! ```text
//! H = [[K_prev⁻¹·K_new, 0], [0ᵀ, s]]
//! ```
//!
//! which maps the new copy's points onto the previous copy's as
//! `x_prev = (K_prev⁻¹·K_new·x_new) / s`. The scale is therefore the median of
//! `‖K_prev⁻¹·K_new·x_new‖ / ‖x_prev‖` over confident pixels.

use nalgebra::{Matrix3, Matrix4, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Sl4, DOF};
use crate::submap::{confidence_mask, Grid, Keyframe, Submap};

pub type VarId = usize;
pub type Sigma = SVector<f64, DOF>;

pub const DEFAULT_INTRA_SIGMA: f64 = 1e-2;
pub const DEFAULT_INTER_SIGMA: f64 = 1e-3;
pub const DEFAULT_MIN_POINTS: usize = 100;
const MIN_POINT_NORM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Intra,
    Inter,
    Loop,
}

/// A between-factor: `h_meas ≈ h_i⁻¹ · h_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeMeasurement {
    pub var_i: VarId,
    pub var_j: VarId,
    pub h_meas: Sl4,
    pub kind: EdgeKind,
    pub sigma: Sigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntraTopology {
    Chain,
    AllPairs,
}

/// Builds intra edges for a submap whose keyframe `i` is variable `vars[i]`.
pub fn intra_edges(
    submap: &Submap,
    vars: &[VarId],
    topology: IntraTopology,
    sigma: Sigma,
) -> Vec<EdgeMeasurement> {
    assert_eq!(
        vars.len(),
        submap.keyframes.len(),
        "one variable per keyframe"
    );
    let n = vars.len();
    let pairs: Vec<(usize, usize)> = match topology {
        IntraTopology::Chain => (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect(),
        IntraTopology::AllPairs => (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect(),
    };
    pairs
        .into_iter()
        .map(|(i, j)| {
            let ti = &submap.keyframes[i].t_first;
            let tj = &submap.keyframes[j].t_first;
            EdgeMeasurement {
                var_i: vars[i],
                var_j: vars[j],
                h_meas: Sl4::from_se3(&ti.inverse().compose(tj)),
                kind: EdgeKind::Intra,
                sigma,
            }
        })
        .collect()
}

/// Median over masked pixels of `‖a·x_j‖ / ‖x_i‖`.
///
/// Pixels with `‖x_i‖ ≤ 1e-9` carry no scale information and are skipped.
pub fn estimate_scale(
    x_i: &Grid<Vector3<f64>>,
    x_j: &Grid<Vector3<f64>>,
    a: &Matrix3<f64>,
    mask: &Grid<bool>,
    min_points: usize,
) -> Result<f64> {
    if x_i.dims() != x_j.dims() || x_i.dims() != mask.dims() {
        return Err(Error::DimensionMismatch(format!(
            "point grids {:?} / {:?}, mask {:?}",
            x_i.dims(),
            x_j.dims(),
            mask.dims()
        )));
    }
    let mut ratios: Vec<f64> = x_i
        .iter()
        .zip(x_j.iter())
        .zip(mask.iter())
        .filter(|((xi, _), &m)| m && xi.norm() > MIN_POINT_NORM)
        .map(|((xi, xj), _)| (a * xj).norm() / xi.norm())
        .filter(|r| r.is_finite())
        .collect();
    if ratios.len() < min_points.max(1) {
        return Err(Error::InsufficientPoints {
            found: ratios.len(),
            required: min_points,
        });
    }
    let n = ratios.len();
    let mid = n / 2;
    let (_, upper, _) = ratios.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    let median = if n % 2 == 1 {
        upper
    } else {
        let lower = ratios[..mid].iter().copied().fold(f64::MIN, f64::max);
        0.5 * (lower + upper)
    };
    if !(median > 0.0) {
        return Err(Error::InsufficientPoints {
            found: 0,
            required: min_points,
        });
    }
    Ok(median)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskPolicy {
    pub conf_percentile: f64,
    pub min_points: usize,
}

impl Default for MaskPolicy {
    fn default() -> Self {
        Self {
            conf_percentile: 0.25,
            min_points: DEFAULT_MIN_POINTS,
        }
    }
}

/// Mask of pixels confident in both copies (intersection of per-frame masks).
pub fn joint_mask(a: &Keyframe, b: &Keyframe, policy: &MaskPolicy) -> Result<Grid<bool>> {
    if a.conf.dims() != b.conf.dims() {
        return Err(Error::DimensionMismatch(format!(
            "frame {} copies have dims {:?} and {:?}",
            a.frame_id,
            a.conf.dims(),
            b.conf.dims()
        )));
    }
    let ma = confidence_mask(&a.conf, policy.conf_percentile);
    let mb = confidence_mask(&b.conf, policy.conf_percentile);
    Ok(ma.zip_map(&mb, |&x, &y| x && y))
}

/// Calibration-ratio and scale edge between two estimates of the same image.
pub fn inter_edge(
    kf_prev: &Keyframe,
    kf_new: &Keyframe,
    var_prev: VarId,
    var_new: VarId,
    policy: &MaskPolicy,
    sigma: Sigma,
) -> Result<EdgeMeasurement> {
    if kf_prev.frame_id != kf_new.frame_id {
        return Err(Error::OverlapViolation(format!(
            "inter edge between different frames {} and {}",
            kf_prev.frame_id, kf_new.frame_id
        )));
    }
    let a = kf_prev.k.inverse() * kf_new.k.matrix();
    let mask = joint_mask(kf_prev, kf_new, policy)?;
    let s = estimate_scale(
        &kf_prev.points(),
        &kf_new.points(),
        &a,
        &mask,
        policy.min_points,
    )?;
    Ok(EdgeMeasurement {
        var_i: var_prev,
        var_j: var_new,
        h_meas: Sl4::from_affine_scale(&a, s)?,
        kind: EdgeKind::Inter,
        sigma,
    })
}

/// Relative singular-value floor below which the 15-DoF point fit is
/// considered rank deficient.
pub const POINT_ALIGNMENT_RANK_TOL: f64 = 1e-3;
/// A singular value must exceed this multiple of the residual one to count.
pub const POINT_ALIGNMENT_NOISE_GAP: f64 = 3.0;

/// Full 15-DoF homography fit `x_i ≅ H·x_j` from corresponding 3D points
/// (homogeneous DLT with Hartley-style normalization).
///
/// This is the alignment the calibration-ratio edge replaces; it is kept for
/// ablations. Coplanar points leave at least five null directions
/// (`H + u·πᵀ` for plane `π`), so planar views are rejected as degenerate.
pub fn point_alignment_15dof(
    x_i: &[Vector3<f64>],
    x_j: &[Vector3<f64>],
    rank_tol: f64,
) -> Result<Sl4> {
    if x_i.len() != x_j.len() {
        return Err(Error::DimensionMismatch(
            "correspondence count mismatch".into(),
        ));
    }
    if x_i.len() < 5 {
        return Err(Error::DegenerateAlignment {
            rank: 3 * x_i.len(),
        });
    }
    let ti = normalizing_transform(x_i);
    let tj = normalizing_transform(x_j);
    let mut ata = SMatrix::<f64, 16, 16>::zeros();
    for (pi, pj) in x_i.iter().zip(x_j) {
        let a = apply_affine(&ti, pi);
        let b = apply_affine(&tj, pj);
        let bh = [b.x, b.y, b.z, 1.0];
        // a_r · (h₃·b) − (h_r·b) = 0 for r = 0, 1, 2, with h row-major.
        for r in 0..3 {
            let mut row = SVector::<f64, 16>::zeros();
            for c in 0..4 {
                row[4 * r + c] = -bh[c];
                row[12 + c] = a[r] * bh[c];
            }
            ata += row * row.transpose();
        }
    }
    let eig = ata.symmetric_eigen();
    let mut order: Vec<usize> = (0..16).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]));
    let sv: Vec<f64> = order
        .iter()
        .map(|&k| eig.eigenvalues[k].max(0.0).sqrt())
        .collect();
    // The smallest singular value is the fit residual; directions not clearly
    // above it are set by noise, not by the data.
    let floor = (rank_tol * sv[0]).max(POINT_ALIGNMENT_NOISE_GAP * sv[15]);
    let rank = sv.iter().filter(|&&s| s > floor).count().min(16);
    if rank < 15 {
        return Err(Error::DegenerateAlignment { rank });
    }
    let null = eig.eigenvectors.column(order[15]);
    let hn = Matrix4::from_row_slice(null.as_slice());
    let h = ti.try_inverse().ok_or(Error::DegenerateConfiguration)? * hn * tj;
    let h = if h.determinant() < 0.0 { -h } else { h };
    Sl4::normalize(&h)
}

fn normalizing_transform(pts: &[Vector3<f64>]) -> Matrix4<f64> {
    let n = pts.len() as f64;
    let centroid = pts.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let mean_dist = pts.iter().map(|p| (p - centroid).norm()).sum::<f64>() / n;
    let s = if mean_dist > 0.0 {
        3f64.sqrt() / mean_dist
    } else {
        1.0
    };
    let mut t = Matrix4::identity() * s;
    t[(3, 3)] = 1.0;
    t.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-centroid * s));
    t
}

fn apply_affine(t: &Matrix4<f64>, p: &Vector3<f64>) -> Vector3<f64> {
    t.fixed_view::<3, 3>(0, 0) * p + t.fixed_view::<3, 1>(0, 3)
}
