use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper-triangular pinhole calibration with `k[2][2] = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    k: Matrix3<f64>,
}

impl Intrinsics {
    /// Validates shape and normalizes so that `k[2][2] = 1`.
    pub fn new(k: Matrix3<f64>) -> Result<Self> {
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
            return Err(Error::InvalidIntrinsics("not upper triangular".into()));
        }
        if !(k[(2, 2)] > 0.0) {
            return Err(Error::InvalidIntrinsics("k[2][2] must be positive".into()));
        }
        let k = k / k[(2, 2)];
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0) {
            return Err(Error::InvalidIntrinsics(
                "focal lengths must be positive".into(),
            ));
        }
        Ok(Self { k })
    }

    pub fn from_params(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        Self::new(Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0))
    }

    /// Zeroes numerically tiny below-diagonal entries before validating.
    pub fn from_nearly_upper(mut k: Matrix3<f64>) -> Result<Self> {
        let scale = k.amax().max(1.0);
        for (r, c) in [(1, 0), (2, 0), (2, 1)] {
            if k[(r, c)].abs() > 1e-9 * scale {
                return Err(Error::InvalidIntrinsics("not upper triangular".into()));
            }
            k[(r, c)] = 0.0;
        }
        Self::new(k)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.k
    }

    pub fn fx(&self) -> f64 {
        self.k[(0, 0)]
    }

    pub fn fy(&self) -> f64 {
        self.k[(1, 1)]
    }

    pub fn cx(&self) -> f64 {
        self.k[(0, 2)]
    }

    pub fn cy(&self) -> f64 {
        self.k[(1, 2)]
    }

    /// Closed-form inverse of the upper-triangular matrix.
    pub fn inverse(&self) -> Matrix3<f64> {
        let (fx, s, cx) = (self.k[(0, 0)], self.k[(0, 1)], self.k[(0, 2)]);
        let (fy, cy) = (self.k[(1, 1)], self.k[(1, 2)]);
        Matrix3::new(
            1.0 / fx,
            -s / (fx * fy),
            (s * cy - cx * fy) / (fx * fy),
            0.0,
            1.0 / fy,
            -cy / fy,
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn project(&self, x: &Vector3<f64>) -> (f64, f64) {
        let p = self.k * x;
        (p.x / p.z, p.y / p.z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_matches_general_inverse() {
        let k = Intrinsics::new(Matrix3::new(
            500.0, 2.0, 320.0, 0.0, 480.0, 240.0, 0.0, 0.0, 1.0,
        ))
        .unwrap();
        let diff = k.inverse() - k.matrix().try_inverse().unwrap();
        assert!(diff.amax() < 1e-15);
    }

    #[test]
    fn rejects_negative_focal() {
        assert!(Intrinsics::from_params(-1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn normalizes_bottom_right() {
        let k = Intrinsics::new(Matrix3::new(2.0, 0.0, 2.0, 0.0, 2.0, 2.0, 0.0, 0.0, 2.0)).unwrap();
        assert_eq!(k.matrix()[(2, 2)], 1.0);
        assert_eq!(k.fx(), 1.0);
    }
}
