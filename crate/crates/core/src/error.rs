use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("determinant {0:e} is not positive; homography is degenerate or reflecting")]
    NonPositiveDeterminant(f64),
    #[error("matrix logarithm did not converge: {0}")]
    LogDivergence(String),
    #[error("homogeneous coordinate {0:e} too small; point maps to the plane at infinity")]
    PointAtInfinity(f64),
    #[error("projection matrix has a singular left 3x3 block")]
    SingularProjection,
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("only {found} valid points for scale estimation, need {required}")]
    InsufficientPoints { found: usize, required: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("graph has no prior; gauge freedom is unfixed")]
    GaugeDeficient,
    #[error("overlap convention violated: {0}")]
    OverlapViolation(String),
    #[error("point alignment is degenerate (rank {rank} < 15)")]
    DegenerateAlignment { rank: usize },
    #[error("no correspondences supplied")]
    EmptyCorrespondences,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no timestamp associations within tolerance")]
    NoAssociations,
    #[error("degenerate point configuration for alignment")]
    DegenerateConfiguration,
    #[error("trajectory leaves the scene at frame {0}")]
    TrajectoryOutOfBounds(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
