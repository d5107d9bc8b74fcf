use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};

use crate::alignment::VarId;
use crate::error::{Error, Result};
use crate::evaluation::{write_tum, StampedPose, Trajectory};
use crate::factor_graph::Values;
use crate::geometry::{rq_decompose_projection, Intrinsics, Se3, Sl4};
use crate::submap::{confidence_mask, FrameId, Keyframe, Submap, SubmapId, SubmapKind};

/// A submap together with the variable assigned to each of its keyframes.
#[derive(Debug, Clone)]
pub struct PlacedSubmap {
    pub submap: Submap,
    pub vars: Vec<VarId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePose {
    pub frame_id: FrameId,
    pub timestamp: f64,
    pub submap_id: SubmapId,
    pub var: VarId,
    /// Camera-to-world.
    pub pose: Se3,
    pub k: Intrinsics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapPoint {
    pub position: Vector3<f64>,
    pub confidence: f64,
    pub frame_id: FrameId,
}

#[derive(Debug, Clone, Default)]
pub struct GlobalReconstruction {
    /// One entry per frame, sorted by timestamp.
    pub frames: Vec<FramePose>,
    pub points: Vec<MapPoint>,
    pub skipped: Vec<(FrameId, String)>,
}

impl GlobalReconstruction {
    pub fn trajectory(&self) -> Result<Trajectory> {
        Trajectory::new(
            self.frames
                .iter()
                .map(|f| StampedPose {
                    timestamp: f.timestamp,
                    position: *f.pose.translation(),
                    orientation: f.pose.quaternion(),
                })
                .collect(),
        )
    }
}

/// Calibration and camera-to-world pose from `P = [K | 0]·H⁻¹`.
pub fn recover_frame(h: &Sl4, k: &Intrinsics) -> Result<(Intrinsics, Se3)> {
    let mut k34 = Matrix3x4::zeros();
    k34.fixed_view_mut::<3, 3>(0, 0).copy_from(k.matrix());
    let p = k34 * h.inverse().matrix();
    let (k_rec, world_to_cam) = rq_decompose_projection(&p)?;
    Ok((k_rec, world_to_cam.inverse()))
}

/// World points of the confident pixels of one keyframe copy.
pub fn world_points(h: &Sl4, kf: &Keyframe, conf_percentile: f64) -> Vec<MapPoint> {
    let mask = confidence_mask(&kf.conf, conf_percentile);
    kf.points()
        .iter()
        .zip(kf.depth.iter())
        .zip(kf.conf.iter())
        .zip(mask.iter())
        .filter(|(((_, &d), _), &m)| m && d > 0.0)
        .filter_map(|(((x, _), &c), _)| {
            h.act(x).ok().map(|p| MapPoint {
                position: p,
                confidence: c,
                frame_id: kf.frame_id,
            })
        })
        .collect()
}

/// Poses, intrinsics and the point cloud. Each frame uses the copy from the
/// earliest regular submap containing it; loop-closure copies only constrain.
pub fn recover_reconstruction(
    values: &Values,
    submaps: &[PlacedSubmap],
    conf_percentile: f64,
) -> Result<GlobalReconstruction> {
    let mut rec = GlobalReconstruction::default();
    let mut seen = BTreeSet::new();
    for placed in submaps
        .iter()
        .filter(|p| p.submap.kind == SubmapKind::Regular)
    {
        for (kf, &var) in placed.submap.keyframes.iter().zip(&placed.vars) {
            if !seen.insert(kf.frame_id) {
                continue;
            }
            let h = values
                .get(var)
                .ok_or_else(|| Error::InvalidGraph(format!("no value for variable {var}")))?;
            match recover_frame(h, &kf.k) {
                Ok((k, pose)) => {
                    rec.frames.push(FramePose {
                        frame_id: kf.frame_id,
                        timestamp: kf.timestamp,
                        submap_id: placed.submap.submap_id,
                        var,
                        pose,
                        k,
                    });
                    rec.points.extend(world_points(h, kf, conf_percentile));
                }
                Err(e) => rec.skipped.push((kf.frame_id, e.to_string())),
            }
        }
    }
    rec.frames
        .sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    Ok(rec)
}

/// Binary little-endian PLY with float x, y, z, confidence and uint frame_id.
pub fn write_ply<W: Write>(points: &[MapPoint], mut out: W) -> Result<()> {
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property float confidence\nproperty uint frame_id\nend_header\n",
        points.len()
    )?;
    for p in points {
        for v in [p.position.x, p.position.y, p.position.z, p.confidence] {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
        out.write_all(&(p.frame_id as u32).to_le_bytes())?;
    }
    Ok(())
}

pub fn export_ply(rec: &GlobalReconstruction, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ply(&rec.points, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn export_trajectory(rec: &GlobalReconstruction, path: &Path) -> Result<()> {
    write_tum(&rec.trajectory()?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    #[test]
    fn identity_homography_gives_identity_pose() {
        let k = Intrinsics::from_params(500.0, 480.0, 320.0, 240.0).unwrap();
        let (k2, pose) = recover_frame(&Sl4::identity(), &k).unwrap();
        assert!((k2.matrix() - k.matrix()).amax() < 1e-9);
        assert!((pose.to_matrix4() - Se3::identity().to_matrix4()).amax() < 1e-12);
    }

    #[test]
    fn rigid_homography_gives_that_pose() {
        let k = Intrinsics::from_params(500.0, 480.0, 320.0, 240.0).unwrap();
        let t = Se3::exp_parts(Vector3::new(0.1, -0.4, 0.2), Vector3::new(1.0, 2.0, -0.5));
        let (k2, pose) = recover_frame(&Sl4::from_se3(&t), &k).unwrap();
        assert!((k2.matrix() - k.matrix()).amax() < 1e-9);
        assert!((pose.to_matrix4() - t.to_matrix4()).amax() < 1e-9);
    }

    #[test]
    fn calibrated_homography_recovers_true_k() {
        // H = [[K⁻¹·K', 0], [0, s]] applied to points from K' gives back K.
        let k = Intrinsics::from_params(50.0, 50.0, 31.5, 23.5).unwrap();
        let k_est = Intrinsics::from_params(55.0, 52.0, 30.0, 24.0).unwrap();
        let a: Matrix3<f64> = k.inverse() * k_est.matrix();
        let h = Sl4::from_affine_scale(&a, 1.7).unwrap();
        let (k2, pose) = recover_frame(&h, &k_est).unwrap();
        assert!((k2.matrix() - k.matrix()).amax() < 1e-9);
        assert!(pose.translation().norm() < 1e-12);
    }

    #[test]
    fn ply_single_point_golden() {
        let p = MapPoint {
            position: Vector3::new(1.0, -2.0, 0.5),
            confidence: 0.25,
            frame_id: 7,
        };
        let mut bytes = Vec::new();
        write_ply(&[p], &mut bytes).unwrap();
        let header = "ply\nformat binary_little_endian 1.0\nelement vertex 1\n\
                      property float x\nproperty float y\nproperty float z\n\
                      property float confidence\nproperty uint frame_id\nend_header\n";
        let mut golden = header.as_bytes().to_vec();
        golden.extend_from_slice(&[
            0x00, 0x00, 0x80, 0x3f, // 1.0
            0x00, 0x00, 0x00, 0xc0, // -2.0
            0x00, 0x00, 0x00, 0x3f, // 0.5
            0x00, 0x00, 0x80, 0x3e, // 0.25
            0x07, 0x00, 0x00, 0x00, // 7
        ]);
        assert_eq!(bytes, golden);
    }

    #[test]
    fn empty_ply_is_valid() {
        let mut bytes = Vec::new();
        write_ply(&[], &mut bytes).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.contains("element vertex 0\n"));
        assert!(text.ends_with("end_header\n"));
    }
}
