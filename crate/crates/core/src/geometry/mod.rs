//! Group primitives: SL(4), SE(3), pinhole intrinsics and camera-matrix factoring.

mod intrinsics;
pub mod linalg;
mod projection;
mod se3;
mod sl4;

pub use intrinsics::Intrinsics;
pub use projection::rq_decompose_projection;
pub use se3::Se3;
pub use sl4::{Matrix15, Sl4, Tangent15, DOF};
