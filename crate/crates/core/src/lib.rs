//! Submap alignment on the SL(4) manifold with attention-verified loop closures.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod error;
pub mod evaluation;
pub mod factor_graph;
pub mod geometry;
pub mod pipeline;
pub mod retrieval;
pub mod simulator;
pub mod submap;

pub use error::{Error, Result};
pub use evaluation::{AlignMode, AteStats, Trajectory};
pub use geometry::{Intrinsics, Se3, Sl4, Tangent15};
pub use nalgebra;
pub use pipeline::{run, DatasetSource, SlamConfig, SlamState, SubmapSource};
pub use retrieval::{verify_pair, TokenSet, VerifyConfig};
pub use submap::{DatasetManifest, Keyframe, Submap};
