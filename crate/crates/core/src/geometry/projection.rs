use nalgebra::{Matrix3, Matrix3x4, Vector3};

use super::intrinsics::Intrinsics;
use super::linalg::rq3;
use super::se3::Se3;
use crate::error::{Error, Result};

/// Factor a camera matrix as `p ∝ K·[R | t]`.
///
/// `K` is upper triangular with a positive diagonal and `K[2][2] = 1`, and
/// `det(R) = +1`. A negative-determinant left block is handled by flipping
/// the overall sign of `p`, which is free since projections are up to scale.
/// The returned transform maps world points into the camera frame.
pub fn rq_decompose_projection(p: &Matrix3x4<f64>) -> Result<(Intrinsics, Se3)> {
    let mut left: Matrix3<f64> = p.fixed_view::<3, 3>(0, 0).into();
    let mut last: Vector3<f64> = p.column(3).into();
    let det = left.determinant();
    let scale = p.amax();
    if !det.is_finite() || det.abs() <= 1e-12 * scale.powi(3) {
        return Err(Error::SingularProjection);
    }
    if det < 0.0 {
        left = -left;
        last = -last;
    }
    let (upper, rot) = rq3(&left).ok_or(Error::SingularProjection)?;
    let lambda = upper[(2, 2)];
    let mut k = upper / lambda;
    k[(1, 0)] = 0.0;
    k[(2, 0)] = 0.0;
    k[(2, 1)] = 0.0;
    let t = upper.try_inverse().ok_or(Error::SingularProjection)? * last;
    let intrinsics = Intrinsics::new(k)?;
    let pose = Se3::new(rot, t).map_err(|_| Error::SingularProjection)?;
    Ok((intrinsics, pose))
}
