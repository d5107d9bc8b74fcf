use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::look_at;
use super::scene::{Primitive, SceneSpec};
use crate::error::{Error, Result};
use crate::geometry::Se3;
use crate::submap::FrameId;

pub const FRAME_PERIOD_S: f64 = 0.1;

/// Scene plus camera path, already keyframed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub scene: SceneSpec,
    /// Camera-to-world pose per frame.
    pub poses: Vec<Se3>,
    pub timestamps: Vec<f64>,
    pub submap_size: usize,
    /// Frames whose place descriptor is copied from another frame's pose.
    pub descriptor_aliases: BTreeMap<FrameId, FrameId>,
}

impl Scenario {
    pub fn frame_count(&self) -> usize {
        self.poses.len()
    }

    pub fn num_submaps(&self) -> usize {
        (self.poses.len() - 1) / (self.submap_size - 1)
    }

    /// Frame ids of regular submap `k`; consecutive submaps share one frame.
    pub fn submap_frames(&self, k: usize) -> Vec<FrameId> {
        let start = k * (self.submap_size - 1);
        (start..start + self.submap_size)
            .map(|f| f as FrameId)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.submap_size < 2 {
            return Err(Error::InvalidConfig(
                "submap size must be at least 2".into(),
            ));
        }
        let n = self.poses.len();
        if n < 2 * self.submap_size || !(n - 1).is_multiple_of(self.submap_size - 1) {
            return Err(Error::InvalidConfig(format!(
                "{n} frames do not tile into overlapping submaps of {}",
                self.submap_size
            )));
        }
        if self.timestamps.len() != n {
            return Err(Error::DimensionMismatch("one timestamp per pose".into()));
        }
        for (i, p) in self.poses.iter().enumerate() {
            if !self.scene.is_free(p.translation(), 0.1) {
                return Err(Error::TrajectoryOutOfBounds(i));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Loop,
    Corridor,
    PlanarWall,
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loop" => Ok(Self::Loop),
            "corridor" => Ok(Self::Corridor),
            "planar-wall" => Ok(Self::PlanarWall),
            other => Err(Error::InvalidConfig(format!("unknown preset {other:?}"))),
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Loop => "loop",
            Preset::Corridor => "corridor",
            Preset::PlanarWall => "planar-wall",
        }
    }

    pub fn scenario(self, seed: u64) -> Scenario {
        match self {
            Preset::Loop => loop_scenario(seed, 12, 16),
            Preset::Corridor => corridor_scenario(seed, 12, 16),
            Preset::PlanarWall => planar_wall_scenario(seed, 6, 16),
        }
    }
}

fn timestamps(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 * FRAME_PERIOD_S).collect()
}

fn bx(min: [f64; 3], max: [f64; 3]) -> Primitive {
    Primitive::Box {
        min: Vector3::from(min),
        max: Vector3::from(max),
    }
}

fn sphere(c: [f64; 3], r: f64) -> Primitive {
    Primitive::Sphere {
        center: Vector3::from(c),
        radius: r,
    }
}

/// Frames per lap of the loop preset; frame `i` and `i + LOOP_LAP` share a pose.
pub const LOOP_LAP: usize = 90;

/// Two laps of a circle in a furnished room.
pub fn loop_scenario(seed: u64, submaps: usize, submap_size: usize) -> Scenario {
    let scene = SceneSpec {
        room: Vector3::new(6.0, 6.0, 3.0),
        primitives: vec![
            bx([0.3, 0.4, 0.0], [1.0, 1.6, 0.9]),
            bx([4.6, 0.3, 0.0], [5.6, 0.9, 1.6]),
            bx([5.2, 3.5, 0.0], [5.8, 5.2, 2.1]),
            bx([1.2, 5.2, 0.0], [2.6, 5.8, 0.8]),
            bx([2.7, 2.7, 0.0], [3.3, 3.3, 0.5]),
            sphere([0.8, 4.4, 1.2], 0.4),
            sphere([4.2, 5.3, 1.7], 0.3),
            sphere([3.5, 0.6, 0.6], 0.35),
        ],
        seed,
    };
    let n = submaps * (submap_size - 1) + 1;
    let center = Vector3::new(3.0, 3.0, 0.0);
    let poses = (0..n)
        .map(|i| {
            let phi = 2.0 * PI * (i % LOOP_LAP) as f64 / LOOP_LAP as f64;
            let eye = center
                + Vector3::new(
                    1.5 * phi.cos(),
                    1.5 * phi.sin(),
                    1.4 + 0.1 * (2.0 * phi).sin(),
                );
            // Look along the tangent, turned 35° outward and slightly down.
            let heading = phi + PI / 2.0 - 35f64.to_radians();
            let target = eye + Vector3::new(heading.cos(), heading.sin(), -0.15);
            look_at(&eye, &target)
        })
        .collect();
    Scenario {
        name: "loop".into(),
        scene,
        poses,
        timestamps: timestamps(n),
        submap_size,
        descriptor_aliases: BTreeMap::new(),
    }
}

/// A straight corridor with no revisits. Some late frames carry the place
/// descriptor of a frame 60 steps earlier, so retrieval fires on places that
/// share no geometry.
pub fn corridor_scenario(seed: u64, submaps: usize, submap_size: usize) -> Scenario {
    let mut primitives = Vec::new();
    for i in 0..9 {
        let x = 2.0 + 3.0 * i as f64;
        primitives.push(bx([x, 2.0, 0.0], [x + 0.8, 2.4, 1.0 + 0.1 * i as f64]));
        primitives.push(sphere([x + 1.6, 2.1, 1.8], 0.25));
        primitives.push(bx([x + 0.7, 0.0, 0.0], [x + 1.3, 0.35, 1.3]));
    }
    let scene = SceneSpec {
        room: Vector3::new(30.0, 2.4, 2.6),
        primitives,
        seed,
    };
    let n = submaps * (submap_size - 1) + 1;
    let poses = (0..n)
        .map(|i| {
            let x = 1.5 + 0.12 * i as f64;
            let eye = Vector3::new(x, 0.9, 1.3 + 0.05 * (i as f64 * 0.3).sin());
            // Facing the left wall, yawed 30° toward the direction of travel.
            let yaw = PI / 2.0 - 30f64.to_radians();
            look_at(&eye, &(eye + Vector3::new(yaw.cos(), yaw.sin(), -0.1)))
        })
        .collect();
    let descriptor_aliases = (70..n)
        .step_by(15)
        .map(|f| (f as FrameId, (f - 60) as FrameId))
        .collect();
    Scenario {
        name: "corridor".into(),
        scene,
        poses,
        timestamps: timestamps(n),
        submap_size,
        descriptor_aliases,
    }
}

/// Sideways motion in front of a single flat wall: every pixel sees the same plane.
pub fn planar_wall_scenario(seed: u64, submaps: usize, submap_size: usize) -> Scenario {
    let scene = SceneSpec {
        room: Vector3::new(12.0, 6.0, 3.0),
        primitives: vec![],
        seed,
    };
    let n = submaps * (submap_size - 1) + 1;
    let poses = (0..n)
        .map(|i| {
            let t = i as f64;
            let eye = Vector3::new(
                2.0 + 0.06 * t,
                4.0 + 0.05 * (0.2 * t).sin(),
                1.5 + 0.05 * (0.13 * t).cos(),
            );
            let target = eye + Vector3::new(0.05 * (0.1 * t).sin(), 1.0, 0.03 * (0.17 * t).sin());
            look_at(&eye, &target)
        })
        .collect();
    Scenario {
        name: "planar-wall".into(),
        scene,
        poses,
        timestamps: timestamps(n),
        submap_size,
        descriptor_aliases: BTreeMap::new(),
    }
}
