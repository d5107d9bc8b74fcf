//! The special linear group SL(4): unit-determinant 4x4 homographies.
//!
//! Tangent coordinates use a fixed ordered basis of 15 traceless generators
//! `G₀ … G₁₄`, grouped by the component of the homography
//! `[[K·R, t], [vᵀ, s]]` they move. `Eᵢⱼ` is the matrix unit with a 1 at
//! row `i`, column `j`.
//!
//! | index | group       | generator                          |
//! |-------|-------------|------------------------------------|
//! | 0     | rotation    | `E₂₁ − E₁₂` (about x)              |
//! | 1     | rotation    | `E₀₂ − E₂₀` (about y)              |
//! | 2     | rotation    | `E₁₀ − E₀₁` (about z)              |
//! | 3–5   | translation | `E₀₃`, `E₁₃`, `E₂₃`                |
//! | 6     | affine      | `E₀₀ − E₂₂` (x focal vs. depth)    |
//! | 7     | affine      | `E₁₁ − E₂₂` (y focal vs. depth)    |
//! | 8     | affine      | `E₀₁` (skew)                       |
//! | 9     | affine      | `E₀₂` (principal point x)          |
//! | 10    | affine      | `E₁₂` (principal point y)          |
//! | 11–13 | projective  | `E₃₀`, `E₃₁`, `E₃₂`                |
//! | 14    | scale       | `diag(¼, ¼, ¼, −¾)`                |
//!
//! With this scaling, `exp(θ·G₁₄)` multiplies dehomogenized points by `e^θ`,
//! and the first six coordinates coincide with the usual `se(3)` hat map.

use std::ops::{Index, Mul};

use nalgebra::{Matrix3, Matrix4, SMatrix, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::linalg;
use super::se3::Se3;
use crate::error::{Error, Result};

pub const DOF: usize = 15;

pub type Matrix15 = SMatrix<f64, DOF, DOF>;

/// Coefficients over the generator basis documented at module level.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Tangent15(pub SVector<f64, DOF>);

impl Tangent15 {
    pub const ROTATION: std::ops::Range<usize> = 0..3;
    pub const TRANSLATION: std::ops::Range<usize> = 3..6;
    pub const AFFINE: std::ops::Range<usize> = 6..11;
    pub const PROJECTIVE: std::ops::Range<usize> = 11..14;
    pub const SCALE: usize = 14;

    pub fn zeros() -> Self {
        Self(SVector::zeros())
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self(SVector::from_column_slice(v))
    }

    pub fn unit(k: usize, value: f64) -> Self {
        let mut v = SVector::zeros();
        v[k] = value;
        Self(v)
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn as_vector(&self) -> &SVector<f64, DOF> {
        &self.0
    }

    pub fn rotation(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.0[3], self.0[4], self.0[5])
    }

    /// `Σ ξₖ Gₖ`.
    pub fn hat(&self) -> Matrix4<f64> {
        let x = &self.0;
        let q = 0.25 * x[14];
        Matrix4::new(
            x[6] + q,
            -x[2] + x[8],
            x[1] + x[9],
            x[3],
            x[2],
            x[7] + q,
            -x[0] + x[10],
            x[4],
            -x[1],
            x[0],
            -x[6] - x[7] + q,
            x[5],
            x[11],
            x[12],
            x[13],
            -3.0 * q,
        )
    }

    /// Coefficients of a traceless 4x4 matrix; the inverse of [`Tangent15::hat`]
    /// on `sl(4)`. Any trace component is discarded.
    pub fn vee(m: &Matrix4<f64>) -> Self {
        let mut x = SVector::<f64, DOF>::zeros();
        x[0] = m[(2, 1)];
        x[1] = -m[(2, 0)];
        x[2] = m[(1, 0)];
        x[3] = m[(0, 3)];
        x[4] = m[(1, 3)];
        x[5] = m[(2, 3)];
        let trace = m.trace();
        let d = |i: usize| m[(i, i)] - 0.25 * trace;
        let scale = (d(0) + d(1) + d(2) - d(3)) * 2.0 / 3.0;
        x[14] = scale;
        x[6] = d(0) - 0.25 * scale;
        x[7] = d(1) - 0.25 * scale;
        x[8] = m[(0, 1)] + m[(1, 0)];
        x[9] = m[(0, 2)] + m[(2, 0)];
        x[10] = m[(1, 2)] + m[(2, 1)];
        x[11] = m[(3, 0)];
        x[12] = m[(3, 1)];
        x[13] = m[(3, 2)];
        Self(x)
    }

    /// Generator `Gₖ`.
    pub fn generator(k: usize) -> Matrix4<f64> {
        Self::unit(k, 1.0).hat()
    }

    /// Matrix of the adjoint action `ad_x(ξ) = vee([x̂, ξ̂])`.
    pub fn ad(&self) -> Matrix15 {
        let xh = self.hat();
        let mut out = Matrix15::zeros();
        for k in 0..DOF {
            let g = Self::generator(k);
            out.set_column(k, &Self::vee(&(xh * g - g * xh)).0);
        }
        out
    }

    /// Right Jacobian: `exp(x + δ) ≈ exp(x)·exp(J_r(x)·δ)`.
    pub fn right_jacobian(&self) -> Matrix15 {
        let neg_ad = -self.ad();
        let mut sum = Matrix15::identity();
        let mut term = Matrix15::identity();
        for n in 1..80 {
            term = term * neg_ad / (n + 1) as f64;
            sum += term;
            if term.amax() < 1e-18 {
                break;
            }
        }
        sum
    }

    /// Inverse of [`Tangent15::right_jacobian`].
    pub fn right_jacobian_inv(&self) -> Option<Matrix15> {
        self.right_jacobian().try_inverse()
    }
}

impl Index<usize> for Tangent15 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A 4x4 homography stored as its unit-determinant representative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sl4 {
    m: Matrix4<f64>,
}

impl Sl4 {
    pub const DET_EPS: f64 = 1e-15;
    pub const DEHOMOGENIZE_EPS: f64 = 1e-12;

    pub fn identity() -> Self {
        Self {
            m: Matrix4::identity(),
        }
    }

    /// Rescales `m` to unit determinant; `m / det(m)^(1/4)`.
    pub fn normalize(m: &Matrix4<f64>) -> Result<Self> {
        let det = m.determinant();
        if !(det > Self::DET_EPS) || !det.is_finite() {
            return Err(Error::NonPositiveDeterminant(det));
        }
        let mut out = m / det.powf(0.25);
        // One Newton-style correction absorbs rounding in the fourth root.
        let det2 = out.determinant();
        out /= det2.powf(0.25);
        Ok(Self { m: out })
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    pub fn det(&self) -> f64 {
        self.m.determinant()
    }

    pub fn exp(xi: &Tangent15) -> Self {
        let m = linalg::expm(&xi.hat());
        Self::normalize(&m).expect("exponential of a traceless matrix has positive determinant")
    }

    pub fn log(&self) -> Result<Tangent15> {
        Ok(Tangent15::vee(&linalg::logm(&self.m)?))
    }

    pub fn compose(&self, other: &Sl4) -> Sl4 {
        Self::renormalized(self.m * other.m)
    }

    pub fn inverse(&self) -> Sl4 {
        let inv = self
            .m
            .try_inverse()
            .expect("unit-determinant matrix is invertible");
        Self::renormalized(inv)
    }

    // Products and inverses of unit-determinant matrices only drift by rounding.
    fn renormalized(m: Matrix4<f64>) -> Sl4 {
        let det = m.determinant();
        debug_assert!(det > 0.0, "determinant {det} lost positivity");
        Sl4 {
            m: m / det.powf(0.25),
        }
    }

    /// `h · exp(ξ)`: the right-multiplicative retraction.
    pub fn retract(&self, xi: &Tangent15) -> Sl4 {
        self.compose(&Sl4::exp(xi))
    }

    /// Dehomogenized action on a 3D point.
    pub fn act(&self, x: &Vector3<f64>) -> Result<Vector3<f64>> {
        let y = self.m * Vector4::new(x.x, x.y, x.z, 1.0);
        if y.w.abs() <= Self::DEHOMOGENIZE_EPS {
            return Err(Error::PointAtInfinity(y.w));
        }
        Ok(Vector3::new(y.x / y.w, y.y / y.w, y.z / y.w))
    }

    pub fn from_se3(t: &Se3) -> Sl4 {
        Sl4 { m: t.to_matrix4() }
    }

    /// `[[a, 0], [0ᵀ, s]]`, acting on points as `x ↦ a·x / s`.
    pub fn from_affine_scale(a: &Matrix3<f64>, s: f64) -> Result<Sl4> {
        if !(s > 0.0) || !(a.determinant() > 0.0) {
            return Err(Error::NonPositiveDeterminant(a.determinant() * s));
        }
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(a);
        m[(3, 3)] = s;
        Self::normalize(&m)
    }

    /// Matrix of `Ad_h ξ = vee(h·ξ̂·h⁻¹)`.
    pub fn adjoint(&self) -> Matrix15 {
        let inv = self.inverse().m;
        let mut out = Matrix15::zeros();
        for k in 0..DOF {
            let g = Tangent15::generator(k);
            out.set_column(k, &Tangent15::vee(&(self.m * g * inv)).0);
        }
        out
    }

    /// Largest absolute deviation from another element.
    pub fn max_abs_diff(&self, other: &Sl4) -> f64 {
        (self.m - other.m).amax()
    }
}

impl Mul for Sl4 {
    type Output = Sl4;
    fn mul(self, rhs: Sl4) -> Sl4 {
        self.compose(&rhs)
    }
}

impl Mul for &Sl4 {
    type Output = Sl4;
    fn mul(self, rhs: &Sl4) -> Sl4 {
        self.compose(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    #[test]
    fn generators_are_traceless_and_independent() {
        let mut basis = SMatrix::<f64, 16, DOF>::zeros();
        for k in 0..DOF {
            let g = Tangent15::generator(k);
            assert!(g.trace().abs() < 1e-15, "G{k} has trace");
            basis.set_column(k, &SVector::<f64, 16>::from_column_slice(g.as_slice()));
        }
        let sv = basis.svd(false, false).singular_values;
        assert!(sv.min() > 0.1, "basis rank deficient: {sv}");
    }

    #[test]
    fn vee_inverts_hat() {
        let x = Tangent15::from_slice(&[
            0.1, -0.2, 0.3, 1.0, 2.0, 3.0, 0.4, -0.5, 0.6, 0.7, -0.8, 0.9, -1.0, 1.1, 1.2,
        ]);
        assert!((Tangent15::vee(&x.hat()).0 - x.0).amax() < 1e-15);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(
            Sl4::normalize(&Matrix4::identity()).unwrap(),
            Sl4::identity()
        );
        let two = Sl4::normalize(&(Matrix4::identity() * 2.0)).unwrap();
        assert!(two.max_abs_diff(&Sl4::identity()) < 1e-15);
        let d = Sl4::normalize(&Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 1.0, 8.0))).unwrap();
        let c = 8f64.powf(-0.25);
        let expected = Vector4::new(c, c, c, 8.0 * c);
        assert!((d.matrix().diagonal() - expected).amax() < 1e-15);
        assert!((d.det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_rejects_reflection() {
        let m = Matrix4::from_diagonal(&Vector4::new(-1.0, 1.0, 1.0, 1.0));
        assert!(matches!(
            Sl4::normalize(&m),
            Err(Error::NonPositiveDeterminant(_))
        ));
        assert!(Sl4::normalize(&Matrix4::zeros()).is_err());
    }

    #[test]
    fn exp_of_z_rotation_matches_rodrigues() {
        let theta = 0.7;
        let h = Sl4::exp(&Tangent15::unit(2, theta));
        let r = Rotation3::from_axis_angle(&Vector3::z_axis(), theta);
        let expected = Sl4::from_se3(&Se3::from_parts(&r, Vector3::zeros()));
        assert!(h.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn scale_generator_scales_points() {
        let h = Sl4::exp(&Tangent15::unit(Tangent15::SCALE, 2f64.ln()));
        let y = h.act(&Vector3::new(1.0, -2.0, 3.0)).unwrap();
        assert!((y - Vector3::new(2.0, -4.0, 6.0)).amax() < 1e-13);
    }

    #[test]
    fn act_examples() {
        let x = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(Sl4::identity().act(&x).unwrap(), x);
        let h = Sl4::from_affine_scale(&Matrix3::identity(), 2.0).unwrap();
        let y = h.act(&Vector3::new(1.0, 1.0, 1.0)).unwrap();
        assert!((y - Vector3::new(0.5, 0.5, 0.5)).amax() < 1e-15);
        let dbl = Sl4::from_affine_scale(&(Matrix3::identity() * 2.0), 1.0).unwrap();
        assert!((dbl.act(&x).unwrap() - 2.0 * x).amax() < 1e-14);
    }

    #[test]
    fn act_rejects_plane_at_infinity() {
        let mut m = Matrix4::identity();
        m[(3, 0)] = -1.0;
        m[(3, 3)] = 1.0;
        m[(0, 0)] = 2.0;
        let h = Sl4::normalize(&m).unwrap();
        assert!(matches!(
            h.act(&Vector3::new(1.0, 0.0, 0.0)),
            Err(Error::PointAtInfinity(_))
        ));
    }

    #[test]
    fn embeddings_of_identity() {
        assert_eq!(Sl4::from_se3(&Se3::identity()), Sl4::identity());
        assert!(
            Sl4::from_affine_scale(&Matrix3::identity(), 1.0)
                .unwrap()
                .max_abs_diff(&Sl4::identity())
                < 1e-15
        );
        assert!(Sl4::from_affine_scale(&Matrix3::identity(), -1.0).is_err());
    }

    #[test]
    fn log_of_identity_is_zero() {
        assert_eq!(Sl4::identity().log().unwrap().norm(), 0.0);
    }

    #[test]
    fn right_jacobian_first_order() {
        let x = Tangent15::from_slice(&[
            0.1, -0.2, 0.3, 0.2, 0.1, -0.1, 0.05, -0.04, 0.03, 0.02, -0.01, 0.01, 0.02, -0.03, 0.1,
        ]);
        let d = Tangent15::from_slice(&[1e-6; 15]);
        let lhs = Sl4::exp(&Tangent15(x.0 + d.0));
        let rhs = Sl4::exp(&x).compose(&Sl4::exp(&Tangent15(x.right_jacobian() * d.0)));
        assert!(lhs.max_abs_diff(&rhs) < 1e-11);
    }
}
