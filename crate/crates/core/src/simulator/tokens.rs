use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{mix, rng, SceneSpec};
use crate::error::Result;
use crate::geometry::{Intrinsics, Se3};
use crate::retrieval::TokenSet;

const TAG_LATENT: u64 = 11;
const TAG_TOKEN: u64 = 12;
const TAG_MISS: u64 = 13;
const TAG_PAIR: u64 = 14;

/// Stand-in for head-averaged attention tokens.
///
/// Each token samples the scene at a grid of pixels. Tokens whose ray hits the
/// same voxel share a latent vector; queries and keys are that latent plus
/// independent noise. Frames that see common surfaces therefore attend to each
/// other like they attend to themselves, and unrelated frames do not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenModel {
    pub grid_w: usize,
    pub grid_h: usize,
    pub dim: usize,
    pub voxel: f64,
    pub latent_scale: f64,
    pub noise: f64,
}

impl Default for TokenModel {
    fn default() -> Self {
        Self {
            grid_w: 16,
            grid_h: 12,
            dim: 32,
            voxel: 0.25,
            latent_scale: 1.0,
            noise: 0.1,
        }
    }
}

fn gaussian_row(r: &mut impl Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let x: f64 = StandardNormal.sample(r);
            scale * x
        })
        .collect()
}

/// Rounds through f32 so in-memory tokens equal their on-disk form.
fn f32_round(m: DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| v as f32 as f64)
}

impl TokenModel {
    fn latent(&self, scene_seed: u64, p: &Vector3<f64>) -> Vec<f64> {
        let cell = p.map(|c| (c / self.voxel).floor() as i64 as u64);
        gaussian_row(
            &mut rng(&[scene_seed, TAG_LATENT, cell.x, cell.y, cell.z]),
            self.dim,
            self.latent_scale,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn frame_tokens(
        &self,
        scene: &SceneSpec,
        pose: &Se3,
        k: &Intrinsics,
        width: usize,
        height: usize,
        seed: u64,
        frame: u64,
    ) -> Result<TokenSet> {
        let n = self.grid_w * self.grid_h;
        let mut q = DMatrix::zeros(n, self.dim);
        let mut kk = DMatrix::zeros(n, self.dim);
        let mut noise_rng = rng(&[seed, TAG_TOKEN, frame]);
        for j in 0..self.grid_h {
            for i in 0..self.grid_w {
                let u = (i as f64 + 0.5) * width as f64 / self.grid_w as f64 - 0.5;
                let v = (j as f64 + 0.5) * height as f64 / self.grid_h as f64 - 0.5;
                let t = j * self.grid_w + i;
                let z = match scene.hit_point(pose, k, u, v) {
                    Some(p) => self.latent(scene.seed, &p),
                    None => gaussian_row(
                        &mut rng(&[seed, TAG_MISS, frame, t as u64]),
                        self.dim,
                        self.latent_scale,
                    ),
                };
                for c in 0..self.dim {
                    let nq: f64 = StandardNormal.sample(&mut noise_rng);
                    let nk: f64 = StandardNormal.sample(&mut noise_rng);
                    q[(t, c)] = z[c] + self.noise * nq;
                    kk[(t, c)] = z[c] + self.noise * nk;
                }
            }
        }
        TokenSet::new(f32_round(q), f32_round(kk))
    }
}

/// Random Fourier features of camera position and viewing direction, so that
/// inner products approximate a Gaussian kernel on pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorModel {
    pub dim: usize,
    pub position_scale: f64,
    pub heading_weight: f64,
    pub seed: u64,
}

impl Default for DescriptorModel {
    fn default() -> Self {
        Self {
            dim: 512,
            position_scale: 0.25,
            heading_weight: 2.0,
            seed: 0x5A1AD,
        }
    }
}

impl DescriptorModel {
    pub fn describe(&self, pose: &Se3) -> DVector<f64> {
        let p = pose.translation() / self.position_scale;
        let f = pose.rotation().column(2) * self.heading_weight;
        let y = [p.x, p.y, p.z, f[0], f[1], f[2]];
        let mut r = rng(&[self.seed]);
        let mut d = DVector::zeros(self.dim);
        for j in 0..self.dim {
            let w: [f64; 6] = std::array::from_fn(|_| StandardNormal.sample(&mut r));
            let b = r.gen_range(0.0..std::f64::consts::TAU);
            d[j] = (w.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() + b).cos();
        }
        // f32-exact so the on-disk form is lossless; unit norm up to f32 rounding.
        let n = d.norm();
        d.map(|v| (v / n) as f32 as f64)
    }
}

/// Two frames sharing every latent, each with its own token noise.
pub fn covisible_pair(n: usize, dim: usize, noise: f64, seed: u64) -> Result<(TokenSet, TokenSet)> {
    // A few tokens per latent, as neighbouring patches on one surface would have.
    let mut r = rng(&[seed, TAG_PAIR, 0]);
    let groups = (n / 3).max(1);
    let latents: Vec<Vec<f64>> = (0..groups)
        .map(|_| gaussian_row(&mut r, dim, 1.0))
        .collect();
    let make = |r: &mut rand_chacha::ChaCha8Rng| {
        let mut q = DMatrix::zeros(n, dim);
        let mut k = DMatrix::zeros(n, dim);
        for t in 0..n {
            let z = &latents[mix(&[seed, t as u64]) as usize % groups];
            for c in 0..dim {
                let nq: f64 = StandardNormal.sample(r);
                let nk: f64 = StandardNormal.sample(r);
                q[(t, c)] = z[c] + noise * nq;
                k[(t, c)] = z[c] + noise * nk;
            }
        }
        TokenSet::new(q, k)
    };
    let a = make(&mut rng(&[seed, TAG_PAIR, 1]))?;
    let b = make(&mut rng(&[seed, TAG_PAIR, 2]))?;
    Ok((a, b))
}

/// Two frames with independent per-token latents (no shared surfaces).
pub fn independent_pair(
    n: usize,
    dim: usize,
    noise: f64,
    seed: u64,
) -> Result<(TokenSet, TokenSet)> {
    let make = |r: &mut rand_chacha::ChaCha8Rng| {
        let mut q = DMatrix::zeros(n, dim);
        let mut k = DMatrix::zeros(n, dim);
        for t in 0..n {
            let z = gaussian_row(r, dim, 1.0);
            for c in 0..dim {
                let nq: f64 = StandardNormal.sample(r);
                let nk: f64 = StandardNormal.sample(r);
                q[(t, c)] = z[c] + noise * nq;
                k[(t, c)] = z[c] + noise * nk;
            }
        }
        TokenSet::new(q, k)
    };
    let a = make(&mut rng(&[seed, TAG_PAIR, 3]))?;
    let b = make(&mut rng(&[seed, TAG_PAIR, 4]))?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::{verify_pair, VerifyConfig};
    use crate::simulator::{Preset, LOOP_LAP};

    #[test]
    fn descriptors_are_unit_and_pose_determined() {
        let s = Preset::Loop.scenario(0);
        let m = DescriptorModel::default();
        let a = m.describe(&s.poses[3]);
        let b = m.describe(&s.poses[3 + LOOP_LAP]);
        assert!((a.norm() - 1.0).abs() < 1e-6);
        assert!(a.dot(&b) > 0.999_999);
        let far = m.describe(&s.poses[3 + LOOP_LAP / 2]);
        assert!(a.dot(&far) < 0.5);
    }

    #[test]
    fn revisit_tokens_verify_and_distant_ones_do_not() {
        let s = Preset::Loop.scenario(0);
        let k = Intrinsics::from_params(50.0, 50.0, 31.5, 23.5).unwrap();
        let m = TokenModel::default();
        let tok = |f: usize| {
            m.frame_tokens(&s.scene, &s.poses[f], &k, 64, 48, 0, f as u64)
                .unwrap()
        };
        let cfg = VerifyConfig::default();
        let same = verify_pair(&tok(10 + LOOP_LAP), &tok(10), &cfg).unwrap();
        assert!(same.accepted, "{}", same.score);
        let other = verify_pair(&tok(10 + LOOP_LAP / 2), &tok(10), &cfg).unwrap();
        assert!(!other.accepted, "{}", other.score);
    }
}
