//! Deterministic frontend emulator.
//!
//! Each submap `k` sees the world through a distortion
//! `A_k = [[ΔK_k, 0], [vₖᵀ, s_k]]` rooted at its first camera. For a frame with
//! true pose `T_rel` relative to that camera, write `A_k⁻¹·T_rel = [[B, c], [wᵀ, σ]]`.
//! The emulated frontend reports
//!
//! ```text
//! t̂ = c / σ,   C = B − c·wᵀ/σ = Q·U (QR, positive diagonal)
//! R̂ = Q,      K̂ = U₂₂·K·U⁻¹,      D̂ = U₂₂·Z / (w·X + σ)
//! ```
//!
//! so its back-projected points satisfy `T_first·A_k·T̂·X̂ ≅ X_world` exactly.
//! Submap 0 is undistorted; it carries the gauge.

mod noise;
mod presets;
mod scene;
mod tokens;
mod writer;

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DVector, Matrix3, Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use noise::{NoiseProfile, NoiseSpec};
pub use presets::{
    corridor_scenario, loop_scenario, planar_wall_scenario, Preset, Scenario, FRAME_PERIOD_S,
    LOOP_LAP,
};
pub use scene::{render_depth, Primitive, SceneSpec};
pub use tokens::{covisible_pair, independent_pair, DescriptorModel, TokenModel};
pub use writer::{retrieval_pairs, write_dataset, GROUNDTRUTH_FILE};

use crate::error::{Error, Result};
use crate::evaluation::{StampedPose, Trajectory};
use crate::geometry::linalg::qr3;
use crate::geometry::{Intrinsics, Se3, Sl4};
use crate::pipeline::SubmapSource;
use crate::retrieval::TokenSet;
use crate::submap::{FrameId, Grid, Keyframe, Submap, SubmapId, SubmapKind};

/// Camera-to-world pose at `eye` looking at `target`, world z up, camera y down.
pub fn look_at(eye: &Vector3<f64>, target: &Vector3<f64>) -> Se3 {
    let z = (target - eye).normalize();
    let x = z.cross(&Vector3::z()).normalize();
    let y = z.cross(&x);
    Se3::new(Matrix3::from_columns(&[x, y, z]), *eye).expect("orthonormal by construction")
}

/// SplitMix64 finalizer folded over `parts`; used to derive independent streams.
pub(crate) fn mix(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

pub(crate) fn rng(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(parts))
}

const TAG_DISTORT: u64 = 1;
const TAG_COPY: u64 = 2;
const TAG_LOOP: u64 = 3;

/// Rendering and token parameters shared by every frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub tokens: TokenModel,
    pub descriptors: DescriptorModel,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 48,
            fx: 50.0,
            fy: 50.0,
            cx: 31.5,
            cy: 23.5,
            tokens: TokenModel::default(),
            descriptors: DescriptorModel::default(),
        }
    }
}

impl SimConfig {
    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::from_params(self.fx, self.fy, self.cx, self.cy).expect("positive focal lengths")
    }
}

/// One submap's view distortion `[[ΔK, 0], [vᵀ, s]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distortion {
    pub dk: Matrix3<f64>,
    pub v: Vector3<f64>,
    pub s: f64,
}

impl Distortion {
    pub fn identity() -> Self {
        Self {
            dk: Matrix3::identity(),
            v: Vector3::zeros(),
            s: 1.0,
        }
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.dk);
        m.fixed_view_mut::<1, 3>(3, 0)
            .copy_from(&self.v.transpose());
        m[(3, 3)] = self.s;
        m
    }

    fn sample(noise: &NoiseSpec, k: &Intrinsics, rng: &mut ChaCha8Rng) -> Self {
        let mut sym = |a: f64| if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 };
        let (efx, efy) = (sym(noise.focal_error_frac), sym(noise.focal_error_frac));
        let (ecx, ecy) = (sym(noise.principal_error_px), sym(noise.principal_error_px));
        let v = Vector3::new(
            sym(noise.projective_eps),
            sym(noise.projective_eps),
            sym(noise.projective_eps),
        );
        let (lo, hi) = noise.scale_drift;
        let s = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        // K̂ = K·ΔK: focal scaled by (1 + e), principal point shifted by the pixel error.
        let dk = Matrix3::new(
            1.0 + efx,
            0.0,
            ecx / k.fx(),
            0.0,
            1.0 + efy,
            ecy / k.fy(),
            0.0,
            0.0,
            1.0,
        );
        Self { dk, v, s }
    }
}

/// A rendered submap together with the exact homography of every copy.
#[derive(Debug, Clone)]
pub struct SimSubmap {
    pub submap: Submap,
    pub truth: Vec<Sl4>,
}

/// A scenario, a noise profile and a seed, with per-frame renders cached.
#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    noise: NoiseSpec,
    config: SimConfig,
    seed: u64,
    depth: Vec<Grid<f64>>,
    hit: Vec<Grid<bool>>,
    tokens: Vec<Arc<TokenSet>>,
    descriptors: Vec<DVector<f64>>,
    /// The f32 values written to disk; `descriptors` is their normalization.
    stored_descriptors: Vec<DVector<f64>>,
    distortion_override: BTreeMap<SubmapId, Distortion>,
}

impl Simulation {
    pub fn new(scenario: Scenario, noise: NoiseSpec, config: SimConfig, seed: u64) -> Result<Self> {
        scenario.validate()?;
        noise.validate()?;
        let k = config.intrinsics();
        let mut depth = Vec::with_capacity(scenario.frame_count());
        let mut hit = Vec::with_capacity(scenario.frame_count());
        for pose in &scenario.poses {
            let (d, m) = render_depth(&scenario.scene, pose, &k, config.width, config.height);
            depth.push(d);
            hit.push(m);
        }
        let tokens = (0..scenario.frame_count())
            .map(|f| {
                config
                    .tokens
                    .frame_tokens(
                        &scenario.scene,
                        &scenario.poses[f],
                        &k,
                        config.width,
                        config.height,
                        seed,
                        f as u64,
                    )
                    .map(Arc::new)
            })
            .collect::<Result<Vec<_>>>()?;
        let stored_descriptors: Vec<DVector<f64>> = (0..scenario.frame_count())
            .map(|f| {
                let src = scenario
                    .descriptor_aliases
                    .get(&(f as FrameId))
                    .copied()
                    .unwrap_or(f as FrameId);
                config.descriptors.describe(&scenario.poses[src as usize])
            })
            .collect();
        // Same normalization the dataset reader applies.
        let descriptors = stored_descriptors.iter().map(|d| d / d.norm()).collect();
        Ok(Self {
            scenario,
            noise,
            config,
            seed,
            depth,
            hit,
            tokens,
            descriptors,
            stored_descriptors,
            distortion_override: BTreeMap::new(),
        })
    }

    pub fn preset(preset: Preset, noise: NoiseSpec, seed: u64) -> Result<Self> {
        Self::new(preset.scenario(seed), noise, SimConfig::default(), seed)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn true_depth(&self, frame: FrameId) -> &Grid<f64> {
        &self.depth[frame as usize]
    }

    pub fn tokens(&self, frame: FrameId) -> &Arc<TokenSet> {
        &self.tokens[frame as usize]
    }

    pub fn descriptor(&self, frame: FrameId) -> &DVector<f64> {
        &self.descriptors[frame as usize]
    }

    pub(crate) fn stored_descriptor(&self, frame: FrameId) -> &DVector<f64> {
        &self.stored_descriptors[frame as usize]
    }

    /// Forces the distortion of a regular submap (e.g. a pure scale drift).
    pub fn set_distortion(&mut self, submap: SubmapId, d: Distortion) {
        self.distortion_override.insert(submap, d);
    }

    pub fn distortion(&self, submap: SubmapId) -> Distortion {
        if let Some(d) = self.distortion_override.get(&submap) {
            return *d;
        }
        if submap == 0 {
            return Distortion::identity();
        }
        Distortion::sample(
            &self.noise,
            &self.config.intrinsics(),
            &mut rng(&[self.seed, TAG_DISTORT, submap]),
        )
    }

    fn loop_distortion(&self, retrieved: FrameId, query: FrameId) -> Distortion {
        let mut r = rng(&[self.seed, TAG_LOOP, retrieved, query]);
        Distortion::sample(&self.noise, &self.config.intrinsics(), &mut r)
    }

    pub fn groundtruth(&self) -> Trajectory {
        let poses = self
            .scenario
            .poses
            .iter()
            .zip(&self.scenario.timestamps)
            .map(|(p, &t)| StampedPose {
                timestamp: t,
                position: *p.translation(),
                orientation: p.quaternion(),
            })
            .collect();
        Trajectory::new(poses).expect("scenario timestamps increase")
    }

    /// The copy of `frame` seen by a submap rooted at `anchor` with distortion `a`.
    fn copy(
        &self,
        anchor: FrameId,
        frame: FrameId,
        is_first: bool,
        a: &Distortion,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Keyframe, Sl4)> {
        let k = self.config.intrinsics();
        let t_anchor = &self.scenario.poses[anchor as usize];
        let t_rel = t_anchor
            .inverse()
            .compose(&self.scenario.poses[frame as usize]);
        let a_mat = a.matrix();
        let a_inv = a_mat
            .try_inverse()
            .ok_or_else(|| Error::InvalidConfig("singular submap distortion".into()))?;
        let m = a_inv * t_rel.to_matrix4();
        let b: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into();
        let c: Vector3<f64> = m.fixed_view::<3, 1>(0, 3).into();
        let w: Vector3<f64> = m.fixed_view::<1, 3>(3, 0).transpose();
        let sigma = m[(3, 3)];
        if !(sigma > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "frame {frame}: camera maps behind the plane at infinity"
            )));
        }
        let t_hat = c / sigma;
        let cm = b - c * w.transpose() / sigma;
        if cm.determinant() <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "frame {frame}: distortion flips orientation"
            )));
        }
        let (q, u) =
            qr3(&cm).ok_or_else(|| Error::InvalidConfig("singular distorted pose".into()))?;
        let u22 = u[(2, 2)];
        let u_inv = u.try_inverse().expect("positive diagonal");
        let k_hat = Intrinsics::new(k.matrix() * u_inv * u22)?;
        let pose_hat = if is_first {
            Se3::identity()
        } else {
            Se3::new(q, t_hat)?.orthonormalized()
        };

        let truth = Sl4::from_se3(t_anchor) * Sl4::normalize(&a_mat)? * Sl4::from_se3(&pose_hat);

        let pose_meas =
            if is_first || (self.noise.sigma_rot == 0.0 && self.noise.sigma_trans == 0.0) {
                pose_hat
            } else {
                let rot = Normal::new(0.0, self.noise.sigma_rot).expect("non-negative sigma");
                let tr = Normal::new(0.0, self.noise.sigma_trans).expect("non-negative sigma");
                let drot = Vector3::from_fn(|_, _| rot.sample(rng));
                let dt = Vector3::from_fn(|_, _| tr.sample(rng));
                pose_hat.compose(&Se3::exp_parts(drot, dt))
            };

        let z = &self.depth[frame as usize];
        let hit = &self.hit[frame as usize];
        let k_inv = k.inverse();
        let depth_noise =
            Normal::new(0.0, self.noise.depth_noise_frac).expect("non-negative sigma");
        let mut depth = Vec::with_capacity(z.len());
        let mut conf = Vec::with_capacity(z.len());
        for v in 0..z.height() {
            for u_px in 0..z.width() {
                let zz = *z.get(u_px, v);
                let x = k_inv * Vector3::new(u_px as f64, v as f64, 1.0) * zz;
                let den = w.dot(&x) + sigma;
                if !*hit.get(u_px, v) || !(den > 1e-9) {
                    depth.push(0.0);
                    conf.push(0.0);
                    continue;
                }
                let clean = u22 * zz / den;
                let mut err = 0.0;
                if self.noise.outlier_frac > 0.0 && rng.gen_bool(self.noise.outlier_frac) {
                    err = rng.gen_range(2.0..10.0);
                } else if self.noise.depth_noise_frac > 0.0 {
                    err = depth_noise.sample(rng);
                }
                depth.push(clean * (1.0 + err));
                conf.push(1.0 / (1.0 + 10.0 * err.abs()));
            }
        }
        let kf = Keyframe {
            frame_id: frame,
            timestamp: self.scenario.timestamps[frame as usize],
            k: k_hat,
            t_first: pose_meas,
            depth: Grid::from_vec(z.width(), z.height(), depth),
            conf: Grid::from_vec(z.width(), z.height(), conf),
            descriptor: Some(self.descriptors[frame as usize].clone()),
            tokens: Some(self.tokens[frame as usize].clone()),
        };
        Ok((kf, truth))
    }

    /// Regular submap `k` with the exact homography of each copy.
    pub fn regular_submap(&self, k: usize) -> Result<SimSubmap> {
        if k >= self.scenario.num_submaps() {
            return Err(Error::InvalidConfig(format!("submap {k} out of range")));
        }
        let frames = self.scenario.submap_frames(k);
        let a = self.distortion(k as SubmapId);
        let mut keyframes = Vec::with_capacity(frames.len());
        let mut truth = Vec::with_capacity(frames.len());
        for (i, &f) in frames.iter().enumerate() {
            let mut r = rng(&[self.seed, TAG_COPY, k as u64, f]);
            let (kf, h) = self.copy(frames[0], f, i == 0, &a, &mut r)?;
            keyframes.push(kf);
            truth.push(h);
        }
        let submap = Submap {
            submap_id: k as SubmapId,
            kind: SubmapKind::Regular,
            keyframes,
        };
        submap.validate()?;
        Ok(SimSubmap { submap, truth })
    }

    /// Two-frame submap rooted at `retrieved`, rendered under its own distortion.
    pub fn loop_submap(
        &self,
        submap_id: SubmapId,
        retrieved: FrameId,
        query: FrameId,
    ) -> Result<SimSubmap> {
        let n = self.scenario.frame_count() as u64;
        if retrieved >= n || query >= n {
            return Err(Error::InvalidConfig(format!(
                "loop frames {retrieved}/{query} out of range"
            )));
        }
        let a = self.loop_distortion(retrieved, query);
        let mut keyframes = Vec::with_capacity(2);
        let mut truth = Vec::with_capacity(2);
        for (i, &f) in [retrieved, query].iter().enumerate() {
            let mut r = rng(&[self.seed, TAG_LOOP, retrieved, query, f, i as u64]);
            let (kf, h) = self.copy(retrieved, f, i == 0, &a, &mut r)?;
            keyframes.push(kf);
            truth.push(h);
        }
        let submap = Submap {
            submap_id,
            kind: SubmapKind::LoopClosure,
            keyframes,
        };
        submap.validate()?;
        Ok(SimSubmap { submap, truth })
    }
}

impl SubmapSource for Simulation {
    fn num_submaps(&self) -> usize {
        self.scenario.num_submaps()
    }

    fn submap(&mut self, index: usize) -> Result<Submap> {
        Ok(self.regular_submap(index)?.submap)
    }

    fn loop_submap(
        &mut self,
        submap_id: SubmapId,
        retrieved: FrameId,
        query: FrameId,
    ) -> Result<Option<Submap>> {
        Ok(Some(
            Simulation::loop_submap(self, submap_id, retrieved, query)?.submap,
        ))
    }

    fn groundtruth(&self) -> Option<Trajectory> {
        Some(Simulation::groundtruth(self))
    }
}
