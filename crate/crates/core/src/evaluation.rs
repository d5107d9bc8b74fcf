//! Trajectory I/O, association, similarity alignment and absolute trajectory error.
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_DT: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedPose {
    pub timestamp: f64,
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    poses: Vec<StampedPose>,
}

impl Trajectory {
    /// Fails unless timestamps are strictly increasing.
    pub fn new(poses: Vec<StampedPose>) -> Result<Self> {
        if poses.windows(2).any(|w| !(w[1].timestamp > w[0].timestamp)) {
            return Err(Error::InvalidConfig(
                "trajectory timestamps must strictly increase".into(),
            ));
        }
        Ok(Self { poses })
    }

    /// Sorts by timestamp, then validates.
    pub fn from_unsorted(mut poses: Vec<StampedPose>) -> Result<Self> {
        poses.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        Self::new(poses)
    }

    pub fn poses(&self) -> &[StampedPose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.poses.iter().map(|p| p.position).collect()
    }

    /// Applies `x ↦ s·R·x + t` to positions and `R` to orientations.
    pub fn transformed(&self, sim: &Sim3) -> Trajectory {
        let rq = UnitQuaternion::from_matrix(&sim.r);
        let poses = self
            .poses
            .iter()
            .map(|p| StampedPose {
                timestamp: p.timestamp,
                position: sim.apply(&p.position),
                orientation: rq * p.orientation,
            })
            .collect();
        Trajectory { poses }
    }
}

pub fn parse_tum_str(text: &str) -> Result<Trajectory> {
    let mut poses = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| Error::Parse {
            line: idx + 1,
            msg: msg.to_string(),
        };
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(&e.to_string()))?;
        if vals.len() != 8 {
            return Err(err(&format!("expected 8 fields, found {}", vals.len())));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(err("non-finite value"));
        }
        let q = Quaternion::new(vals[7], vals[4], vals[5], vals[6]);
        if (q.norm() - 1.0).abs() > 1e-6 {
            return Err(err("quaternion is not unit-norm"));
        }
        poses.push(StampedPose {
            timestamp: vals[0],
            position: Vector3::new(vals[1], vals[2], vals[3]),
            orientation: UnitQuaternion::new_normalize(q),
        });
    }
    Trajectory::new(poses)
}

pub fn parse_tum(path: &Path) -> Result<Trajectory> {
    parse_tum_str(&fs::read_to_string(path)?)
}

pub fn format_tum(traj: &Trajectory) -> String {
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for p in traj.poses() {
        let q = p.orientation.quaternion();
        let _ = writeln!(
            out,
            "{:.9} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e}",
            p.timestamp, p.position.x, p.position.y, p.position.z, q.i, q.j, q.k, q.w
        );
    }
    out
}

pub fn write_tum(traj: &Trajectory, path: &Path) -> Result<()> {
    fs::write(path, format_tum(traj))?;
    Ok(())
}

/// Greedy nearest-timestamp matching: candidate pairs are taken in order of
/// increasing |dt|, each pose used at most once. Output is sorted by `a` index.
pub fn associate(a: &Trajectory, b: &Trajectory, max_dt: f64) -> Result<Vec<(usize, usize)>> {
    let mut cands = Vec::new();
    let (pa, pb) = (a.poses(), b.poses());
    for (i, p) in pa.iter().enumerate() {
        // b is sorted, so only a window around p's timestamp can match.
        let start = pb.partition_point(|q| q.timestamp < p.timestamp - max_dt);
        for (j, q) in pb.iter().enumerate().skip(start) {
            let dt = (q.timestamp - p.timestamp).abs();
            if q.timestamp > p.timestamp + max_dt {
                break;
            }
            if dt <= max_dt {
                cands.push((dt, i, j));
            }
        }
    }
    cands.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; pa.len()];
    let mut used_b = vec![false; pb.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in cands {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoAssociations);
    }
    pairs.sort_unstable();
    Ok(pairs)
}

/// Similarity transform `x ↦ s·R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sim3 {
    pub s: f64,
    pub r: Matrix3<f64>,
    pub t: Vector3<f64>,
}

impl Sim3 {
    pub fn identity() -> Self {
        Self {
            s: 1.0,
            r: Matrix3::identity(),
            t: Vector3::zeros(),
        }
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.s * self.r * x + self.t
    }
}

fn centroid(pts: &[Vector3<f64>]) -> Vector3<f64> {
    pts.iter().sum::<Vector3<f64>>() / pts.len() as f64
}

fn alignment(src: &[Vector3<f64>], dst: &[Vector3<f64>], with_scale: bool) -> Result<Sim3> {
    if src.len() != dst.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::DegenerateConfiguration);
    }
    let n = src.len() as f64;
    let (mu_s, mu_d) = (centroid(src), centroid(dst));
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (a, b) in src.iter().zip(dst) {
        let (da, db) = (a - mu_s, b - mu_d);
        cov += db * da.transpose();
        var_s += da.norm_squared();
    }
    cov /= n;
    var_s /= n;
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut sv: Vec<(f64, usize)> = svd.singular_values.iter().copied().zip(0..3).collect();
    sv.sort_by(|a, b| b.0.total_cmp(&a.0));
    let scale_ref = sv[0].0.max(var_s);
    // Collinear or coincident sources leave the rotation about the line undetermined.
    if var_s <= 1e-300 || sv[1].0 <= 1e-12 * scale_ref {
        return Err(Error::DegenerateConfiguration);
    }
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(sv[2].1, sv[2].1)] = -1.0;
    }
    let r = u * d * vt;
    let s = if with_scale {
        (0..3)
            .map(|i| svd.singular_values[i] * d[(i, i)])
            .sum::<f64>()
            / var_s
    } else {
        1.0
    };
    let t = mu_d - s * r * mu_s;
    Ok(Sim3 { s, r, t })
}

/// Least-squares similarity mapping `src` onto `dst`.
pub fn umeyama_sim3(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<Sim3> {
    alignment(src, dst, true)
}

/// Least-squares rigid transform (scale fixed to 1).
pub fn umeyama_se3(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<Sim3> {
    alignment(src, dst, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMode {
    Sim3,
    Se3,
}

impl std::str::FromStr for AlignMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim3" => Ok(Self::Sim3),
            "se3" => Ok(Self::Se3),
            other => Err(Error::InvalidConfig(format!(
                "unknown alignment mode {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AteStats {
    pub rmse: f64,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    pub pairs: usize,
    pub alignment: Sim3,
}

/// Aligns `est` onto `gt` and summarizes the position residuals.
pub fn ate_stats(
    est: &Trajectory,
    gt: &Trajectory,
    mode: AlignMode,
    max_dt: f64,
) -> Result<AteStats> {
    let pairs = associate(est, gt, max_dt)?;
    let src: Vec<Vector3<f64>> = pairs
        .iter()
        .map(|&(i, _)| est.poses()[i].position)
        .collect();
    let dst: Vec<Vector3<f64>> = pairs.iter().map(|&(_, j)| gt.poses()[j].position).collect();
    let sim = match mode {
        AlignMode::Sim3 => umeyama_sim3(&src, &dst)?,
        AlignMode::Se3 => umeyama_se3(&src, &dst)?,
    };
    let mut errs: Vec<f64> = src
        .iter()
        .zip(&dst)
        .map(|(a, b)| (sim.apply(a) - b).norm())
        .collect();
    let n = errs.len() as f64;
    let rmse = (errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let mean = errs.iter().sum::<f64>() / n;
    errs.sort_by(f64::total_cmp);
    let m = errs.len();
    let median = if m % 2 == 1 {
        errs[m / 2]
    } else {
        0.5 * (errs[m / 2 - 1] + errs[m / 2])
    };
    Ok(AteStats {
        rmse,
        mean,
        median,
        max: errs[m - 1],
        pairs: m,
        alignment: sim,
    })
}

pub fn ate_rmse(est: &Trajectory, gt: &Trajectory, mode: AlignMode) -> Result<f64> {
    Ok(ate_stats(est, gt, mode, DEFAULT_MAX_DT)?.rmse)
}

/// Largest distance between any two positions.
pub fn diameter(traj: &Trajectory) -> f64 {
    let p = traj.positions();
    let mut best = 0.0f64;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            best = best.max((p[i] - p[j]).norm());
        }
    }
    best
}
