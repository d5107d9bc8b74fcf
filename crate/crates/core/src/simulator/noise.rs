use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Corruption applied to each submap's copy of the scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Per-frame rotation noise (rad, per axis).
    pub sigma_rot: f64,
    /// Per-frame translation noise (map units, per axis).
    pub sigma_trans: f64,
    /// Per-submap focal length error, uniform in `±frac`.
    pub focal_error_frac: f64,
    /// Per-submap principal point error, uniform in `±px`.
    pub principal_error_px: f64,
    /// Per-submap depth scale, uniform in `[lo, hi]`.
    pub scale_drift: (f64, f64),
    pub depth_noise_frac: f64,
    pub outlier_frac: f64,
    /// Projective row magnitude; anything above zero is outside the edge model.
    pub projective_eps: f64,
}

impl NoiseSpec {
    pub fn zero() -> Self {
        Self {
            sigma_rot: 0.0,
            sigma_trans: 0.0,
            focal_error_frac: 0.0,
            principal_error_px: 0.0,
            scale_drift: (1.0, 1.0),
            depth_noise_frac: 0.0,
            outlier_frac: 0.0,
            projective_eps: 0.0,
        }
    }

    pub fn in_model() -> Self {
        Self {
            sigma_rot: 0.2f64.to_radians(),
            sigma_trans: 0.005,
            focal_error_frac: 0.05,
            scale_drift: (0.7, 1.4),
            depth_noise_frac: 0.01,
            ..Self::zero()
        }
    }

    pub fn out_of_model() -> Self {
        Self {
            principal_error_px: 1.0,
            outlier_frac: 0.05,
            projective_eps: 0.01,
            ..Self::in_model()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let scalars = [
            self.sigma_rot,
            self.sigma_trans,
            self.focal_error_frac,
            self.principal_error_px,
            self.depth_noise_frac,
            self.outlier_frac,
            self.projective_eps,
        ];
        if scalars.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "noise parameters must be finite and non-negative".into(),
            ));
        }
        if self.outlier_frac >= 0.5 {
            return Err(Error::InvalidConfig(
                "outlier_frac must be below 0.5".into(),
            ));
        }
        if self.focal_error_frac >= 0.5 {
            return Err(Error::InvalidConfig(
                "focal_error_frac must be below 0.5".into(),
            ));
        }
        let (lo, hi) = self.scale_drift;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidConfig(
                "scale_drift must satisfy 0 < lo <= hi".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseProfile {
    Zero,
    InModel,
    OutOfModel,
}

impl NoiseProfile {
    pub fn spec(self) -> NoiseSpec {
        match self {
            NoiseProfile::Zero => NoiseSpec::zero(),
            NoiseProfile::InModel => NoiseSpec::in_model(),
            NoiseProfile::OutOfModel => NoiseSpec::out_of_model(),
        }
    }
}

impl FromStr for NoiseProfile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Self::Zero),
            "in-model" => Ok(Self::InModel),
            "out-of-model" => Ok(Self::OutOfModel),
            other => Err(Error::InvalidConfig(format!(
                "unknown noise profile {other:?}"
            ))),
        }
    }
}
