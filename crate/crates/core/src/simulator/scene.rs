use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Se3};
use crate::submap::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    Box {
        min: Vector3<f64>,
        max: Vector3<f64>,
    },
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
}

/// An axis-aligned room `[0, dims]` seen from inside, plus solid primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub room: Vector3<f64>,
    pub primitives: Vec<Primitive>,
    pub seed: u64,
}

const HIT_EPS: f64 = 1e-9;

/// Ray-parameter interval `[t0, t1]` where the ray is inside the box (slab method).
fn slab(
    o: &Vector3<f64>,
    d: &Vector3<f64>,
    min: &Vector3<f64>,
    max: &Vector3<f64>,
) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for a in 0..3 {
        if d[a].abs() < 1e-15 {
            if o[a] < min[a] || o[a] > max[a] {
                return None;
            }
            continue;
        }
        let (ta, tb) = ((min[a] - o[a]) / d[a], (max[a] - o[a]) / d[a]);
        t0 = t0.max(ta.min(tb));
        t1 = t1.min(ta.max(tb));
    }
    (t0 <= t1).then_some((t0, t1))
}

impl Primitive {
    /// Smallest positive ray parameter of an entry hit.
    pub fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        match self {
            Primitive::Box { min, max } => {
                let (t0, _) = slab(o, d, min, max)?;
                (t0 > HIT_EPS).then_some(t0)
            }
            Primitive::Sphere { center, radius } => {
                let oc = o - center;
                let a = d.norm_squared();
                let b = oc.dot(d);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let t = (-b - disc.sqrt()) / a;
                (t > HIT_EPS).then_some(t)
            }
        }
    }

    fn contains(&self, p: &Vector3<f64>, margin: f64) -> bool {
        match self {
            Primitive::Box { min, max } => {
                (0..3).all(|a| p[a] > min[a] - margin && p[a] < max[a] + margin)
            }
            Primitive::Sphere { center, radius } => (p - center).norm() < radius + margin,
        }
    }

    fn inside_room(&self, room: &Vector3<f64>) -> bool {
        let (lo, hi) = match self {
            Primitive::Box { min, max } => (*min, *max),
            Primitive::Sphere { center, radius } => (
                center - Vector3::repeat(*radius),
                center + Vector3::repeat(*radius),
            ),
        };
        (0..3).all(|a| lo[a] >= 0.0 && hi[a] <= room[a] && lo[a] < hi[a])
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.room.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::InvalidConfig(
                "room dimensions must be positive".into(),
            ));
        }
        if let Some(i) = self
            .primitives
            .iter()
            .position(|p| !p.inside_room(&self.room))
        {
            return Err(Error::InvalidConfig(format!(
                "primitive {i} is not inside the room"
            )));
        }
        Ok(())
    }

    /// True when `p` is inside the room and at least `margin` away from every surface.
    pub fn is_free(&self, p: &Vector3<f64>, margin: f64) -> bool {
        (0..3).all(|a| p[a] > margin && p[a] < self.room[a] - margin)
            && !self.primitives.iter().any(|s| s.contains(p, margin))
    }

    /// Nearest hit parameter along `o + t·d`, or `None` if the ray leaves the room.
    pub fn raycast(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        // Inside the room, the exit parameter of the room box is the wall hit.
        let wall = slab(o, d, &Vector3::zeros(), &self.room)
            .map(|(_, t1)| t1)
            .filter(|t| *t > HIT_EPS);
        self.primitives
            .iter()
            .filter_map(|p| p.intersect(o, d))
            .chain(wall)
            .min_by(f64::total_cmp)
    }

    /// World hit point for pixel `(u, v)` of a camera with pose `pose` (camera to world).
    pub fn hit_point(&self, pose: &Se3, k: &Intrinsics, u: f64, v: f64) -> Option<Vector3<f64>> {
        let d = pose.rotation() * (k.inverse() * Vector3::new(u, v, 1.0));
        let o = pose.translation();
        self.raycast(o, &d).map(|t| o + d * t)
    }
}

/// Z-depth image and hit mask. Rays are `R·K⁻¹·(u, v, 1)`, whose camera-frame
/// z component is 1, so the hit parameter is the z-depth itself.
pub fn render_depth(
    scene: &SceneSpec,
    pose: &Se3,
    k: &Intrinsics,
    width: usize,
    height: usize,
) -> (Grid<f64>, Grid<bool>) {
    let k_inv = k.inverse();
    let o = *pose.translation();
    let hits: Vec<Option<f64>> = (0..width * height)
        .into_par_iter()
        .map(|idx| {
            let (u, v) = ((idx % width) as f64, (idx / width) as f64);
            let d = pose.rotation() * (k_inv * Vector3::new(u, v, 1.0));
            scene.raycast(&o, &d)
        })
        .collect();
    let depth = Grid::from_vec(
        width,
        height,
        hits.iter().map(|h| h.unwrap_or(0.0)).collect(),
    );
    let mask = Grid::from_vec(width, height, hits.iter().map(Option::is_some).collect());
    (depth, mask)
}
