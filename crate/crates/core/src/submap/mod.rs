//! Frontend output containers and the back-projection / confidence conventions.
//!
//! Pixel centers sit at integer coordinates, zero-indexed, with `u` the column
//! and `v` the row. Points are expressed in each keyframe's own camera frame.

mod dataset;
mod grid;
pub mod vgsb;

use std::sync::Arc;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

pub use dataset::{
    load_descriptor, load_keyframe, load_tokens, read_grid, write_grid, write_matrix3,
    write_matrix4, write_tokens, write_vector_f32, DatasetManifest, ExportManifest, ExportedImage,
    FrameEntry, KeyframeFiles, LoopSubmapEntry, SubmapEntry, Thresholds, MANIFEST_FILE,
};
pub use grid::Grid;

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Se3};
use crate::retrieval::TokenSet;

pub type FrameId = u64;
pub type SubmapId = u64;

/// One frame of a submap as estimated by the frontend.
#[derive(Debug, Clone)]
pub struct Keyframe {
    pub frame_id: FrameId,
    pub timestamp: f64,
    pub k: Intrinsics,
    /// Pose of this camera in the submap's first-camera frame.
    pub t_first: Se3,
    pub depth: Grid<f64>,
    pub conf: Grid<f64>,
    pub descriptor: Option<DVector<f64>>,
    pub tokens: Option<Arc<TokenSet>>,
}

impl Keyframe {
    pub fn validate(&self) -> Result<()> {
        if self.depth.dims() != self.conf.dims() {
            return Err(Error::DimensionMismatch(format!(
                "frame {}: depth {:?} vs conf {:?}",
                self.frame_id,
                self.depth.dims(),
                self.conf.dims()
            )));
        }
        if let Some(d) = &self.descriptor {
            if (d.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::DimensionMismatch(format!(
                    "frame {}: descriptor norm {}",
                    self.frame_id,
                    d.norm()
                )));
            }
        }
        Ok(())
    }

    pub fn points(&self) -> Grid<Vector3<f64>> {
        back_project(&self.k, &self.depth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubmapKind {
    Regular,
    LoopClosure,
}

#[derive(Debug, Clone)]
pub struct Submap {
    pub submap_id: SubmapId,
    pub kind: SubmapKind,
    pub keyframes: Vec<Keyframe>,
}

impl Submap {
    pub fn validate(&self) -> Result<()> {
        let n = self.keyframes.len();
        match self.kind {
            SubmapKind::Regular if n < 2 => {
                return Err(Error::OverlapViolation(format!(
                    "submap {} has {n} keyframes, need at least 2",
                    self.submap_id
                )))
            }
            SubmapKind::LoopClosure if n != 2 => {
                return Err(Error::OverlapViolation(format!(
                    "loop submap {} has {n} keyframes, need exactly 2",
                    self.submap_id
                )))
            }
            _ => {}
        }
        let first = &self.keyframes[0].t_first;
        if (first.to_matrix4() - Se3::identity().to_matrix4()).amax() > 1e-9 {
            return Err(Error::OverlapViolation(format!(
                "submap {}: first keyframe pose is not identity",
                self.submap_id
            )));
        }
        self.keyframes.iter().try_for_each(Keyframe::validate)
    }

    pub fn first(&self) -> &Keyframe {
        &self.keyframes[0]
    }

    pub fn last(&self) -> &Keyframe {
        self.keyframes
            .last()
            .expect("validated submaps are non-empty")
    }

    pub fn frame_ids(&self) -> Vec<FrameId> {
        self.keyframes.iter().map(|k| k.frame_id).collect()
    }
}

/// `X(u, v) = depth(u, v) · K⁻¹ · (u, v, 1)ᵀ`.
pub fn back_project(k: &Intrinsics, depth: &Grid<f64>) -> Grid<Vector3<f64>> {
    let k_inv = k.inverse();
    Grid::from_fn(depth.width(), depth.height(), |u, v| {
        let ray = k_inv * Vector3::new(u as f64, v as f64, 1.0);
        ray * *depth.get(u, v)
    })
}

/// Linear-interpolation quantile (the common "type 7" definition).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Keep pixels whose confidence reaches the frame's own `percentile` quantile.
pub fn confidence_mask(conf: &Grid<f64>, percentile: f64) -> Grid<bool> {
    let threshold = quantile(conf.as_slice(), percentile);
    conf.map(|&c| c >= threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn back_project_unit_intrinsics() {
        let k = Intrinsics::from_params(1.0, 1.0, 0.0, 0.0).unwrap();
        let pts = back_project(&k, &Grid::filled(4, 3, 1.0));
        for v in 0..3 {
            for u in 0..4 {
                assert_eq!(*pts.get(u, v), Vector3::new(u as f64, v as f64, 1.0));
            }
        }
    }

    #[test]
    fn principal_point_lies_on_axis() {
        let k = Intrinsics::from_params(40.0, 42.0, 5.0, 3.0).unwrap();
        let pts = back_project(&k, &Grid::filled(8, 6, 2.5));
        assert_eq!(*pts.get(5, 3), Vector3::new(0.0, 0.0, 2.5));
    }

    #[test]
    fn constant_confidence_keeps_everything() {
        let conf = Grid::filled(5, 5, 0.3);
        assert!(confidence_mask(&conf, 0.25).iter().all(|&b| b));
        let ramp = Grid::from_fn(5, 5, |u, v| (u + 5 * v) as f64);
        assert!(confidence_mask(&ramp, 0.0).iter().all(|&b| b));
    }

    #[test]
    fn quartile_of_one_to_hundred() {
        let conf = Grid::from_fn(10, 10, |u, v| (v * 10 + u + 1) as f64);
        // Sorted-order oracle: position 0.25 * 99 = 24.75, between 25 and 26.
        let mut sorted: Vec<f64> = conf.as_slice().to_vec();
        sorted.sort_by(f64::total_cmp);
        let oracle = sorted[24] + 0.75 * (sorted[25] - sorted[24]);
        assert_eq!(oracle, 25.75);
        let mask = confidence_mask(&conf, 0.25);
        for (c, m) in conf.iter().zip(mask.iter()) {
            assert_eq!(*m, *c >= 25.75);
        }
        assert_eq!(mask.iter().filter(|&&b| b).count(), 75);
    }

    #[test]
    fn mismatched_depth_and_conf_rejected() {
        let kf = Keyframe {
            frame_id: 0,
            timestamp: 0.0,
            k: Intrinsics::from_params(1.0, 1.0, 0.0, 0.0).unwrap(),
            t_first: Se3::identity(),
            depth: Grid::filled(2, 2, 1.0),
            conf: Grid::filled(3, 2, 1.0),
            descriptor: None,
            tokens: None,
        };
        assert!(matches!(kf.validate(), Err(Error::DimensionMismatch(_))));
    }
}
