use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rigid transform `x ↦ r·x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Se3 {
    r: Matrix3<f64>,
    t: Vector3<f64>,
}

impl Se3 {
    pub const ORTHONORMAL_TOL: f64 = 1e-9;

    pub fn new(r: Matrix3<f64>, t: Vector3<f64>) -> Result<Self> {
        let err = (r * r.transpose() - Matrix3::identity()).amax();
        if err > Self::ORTHONORMAL_TOL || r.determinant() <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "rotation is not proper orthonormal (error {err:e})"
            )));
        }
        Ok(Self { r, t })
    }

    pub fn identity() -> Self {
        Self {
            r: Matrix3::identity(),
            t: Vector3::zeros(),
        }
    }

    pub fn from_parts(rotation: &Rotation3<f64>, t: Vector3<f64>) -> Self {
        Self {
            r: *rotation.matrix(),
            t,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            r: Matrix3::identity(),
            t,
        }
    }

    /// Build from a 4x4 homogeneous rigid matrix (bottom row ignored).
    pub fn from_matrix4(m: &Matrix4<f64>) -> Result<Self> {
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into(),
            m.fixed_view::<3, 1>(0, 3).into(),
        )
    }

    /// Rotation vector and translation, rotation applied via Rodrigues.
    pub fn exp_parts(rot: Vector3<f64>, t: Vector3<f64>) -> Self {
        Self::from_parts(&Rotation3::new(rot), t)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.r
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.t
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.r))
    }

    pub fn compose(&self, other: &Se3) -> Se3 {
        Se3 {
            r: self.r * other.r,
            t: self.r * other.t + self.t,
        }
    }

    pub fn inverse(&self) -> Se3 {
        let rt = self.r.transpose();
        Se3 {
            r: rt,
            t: -(rt * self.t),
        }
    }

    pub fn transform_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.r * x + self.t
    }

    pub fn to_matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.r);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.t);
        m
    }

    /// Re-orthonormalize the rotation block (SVD projection).
    pub fn orthonormalized(&self) -> Se3 {
        let svd = self.r.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * vt;
        if r.determinant() < 0.0 {
            let mut u2 = u;
            u2.column_mut(2).neg_mut();
            r = u2 * vt;
        }
        Se3 { r, t: self.t }
    }
}

impl std::ops::Mul for Se3 {
    type Output = Se3;
    fn mul(self, rhs: Se3) -> Se3 {
        self.compose(&rhs)
    }
}
