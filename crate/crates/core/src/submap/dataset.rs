use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4};
use serde::{Deserialize, Serialize};

use super::vgsb::{self, Array, Dtype};
use super::{FrameId, Grid, Keyframe, SubmapId};
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Se3};
use crate::retrieval::TokenSet;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Contents of `manifest.json` in a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub frame_count: usize,
    pub submap_size: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub thresholds: Thresholds,
    pub frames: Vec<FrameEntry>,
    pub submaps: Vec<SubmapEntry>,
    #[serde(default)]
    pub loop_submaps: Vec<LoopSubmapEntry>,
    #[serde(default)]
    pub groundtruth: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub retrieval: f64,
    pub match_score: f64,
    pub conf_percentile: f64,
    pub min_disparity_px: f64,
}

/// Per-image data shared by every submap copy of the frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub frame_id: FrameId,
    pub timestamp: f64,
    #[serde(default)]
    pub desc: Option<String>,
    #[serde(default)]
    pub qtok: Option<String>,
    #[serde(default)]
    pub ktok: Option<String>,
}

/// One submap's estimate of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeFiles {
    pub frame_id: FrameId,
    pub depth: String,
    pub conf: String,
    pub k: String,
    pub pose: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmapEntry {
    pub submap_id: SubmapId,
    pub frame_ids: Vec<FrameId>,
    pub keyframes: Vec<KeyframeFiles>,
}

/// A pre-rendered two-frame submap: retrieved frame first, query second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSubmapEntry {
    pub submap_id: SubmapId,
    pub query_frame: FrameId,
    pub retrieved_frame: FrameId,
    pub keyframes: Vec<KeyframeFiles>,
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn frame(&self, id: FrameId) -> Option<&FrameEntry> {
        self.frames.iter().find(|f| f.frame_id == id)
    }
}

/// `manifest.json` written by the token exporter, one entry per image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub model: String,
    pub model_version: String,
    /// Global-attention layer the tokens were taken from.
    pub layer: usize,
    /// Number of global-attention layers in the model.
    pub model_depth: usize,
    pub head_averaged: bool,
    pub images: Vec<ExportedImage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedImage {
    pub image: String,
    pub qtok: String,
    pub ktok: String,
    #[serde(default)]
    pub desc: Option<String>,
}

impl ExportManifest {
    /// Loads and checks the layer index and that every listed file exists.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let m: Self = serde_json::from_str(&fs::read_to_string(&path)?)?;
        if m.layer >= m.model_depth {
            return Err(Error::Format {
                path,
                msg: format!("layer {} outside model depth {}", m.layer, m.model_depth),
            });
        }
        for img in &m.images {
            for f in [Some(&img.qtok), Some(&img.ktok), img.desc.as_ref()]
                .into_iter()
                .flatten()
            {
                if !dir.join(f).is_file() {
                    return Err(Error::Format {
                        path: path.clone(),
                        msg: format!("listed file {f} is missing"),
                    });
                }
            }
        }
        Ok(m)
    }

    pub fn image(&self, name: &str) -> Option<&ExportedImage> {
        self.images.iter().find(|i| i.image == name)
    }

    pub fn tokens(&self, dir: &Path, name: &str) -> Result<TokenSet> {
        let img = self.image(name).ok_or_else(|| Error::Format {
            path: dir.join(MANIFEST_FILE),
            msg: format!("no image {name:?}"),
        })?;
        load_tokens(&dir.join(&img.qtok), &dir.join(&img.ktok))
    }
}

pub fn write_grid(path: &Path, grid: &Grid<f64>, dtype: Dtype) -> Result<()> {
    vgsb::write(
        path,
        &Array::new(
            dtype,
            vec![grid.height(), grid.width()],
            grid.as_slice().to_vec(),
        ),
    )
}

pub fn read_grid(path: &Path) -> Result<Grid<f64>> {
    let a = vgsb::read(path)?;
    if a.dims.len() != 2 {
        return Err(Error::Format {
            path: path.into(),
            msg: "expected a rank-2 array".into(),
        });
    }
    Ok(Grid::from_vec(a.dims[1], a.dims[0], a.data))
}

pub fn write_matrix3(path: &Path, m: &Matrix3<f64>) -> Result<()> {
    vgsb::write(
        path,
        &Array::new(Dtype::F64, vec![3, 3], m.transpose().as_slice().to_vec()),
    )
}

pub fn write_matrix4(path: &Path, m: &Matrix4<f64>) -> Result<()> {
    vgsb::write(
        path,
        &Array::new(Dtype::F64, vec![4, 4], m.transpose().as_slice().to_vec()),
    )
}

pub fn write_vector_f32(path: &Path, v: &DVector<f64>) -> Result<()> {
    vgsb::write(
        path,
        &Array::new(Dtype::F32, vec![v.len()], v.as_slice().to_vec()),
    )
}

/// Writes an `N × d` matrix row-major as f32.
pub fn write_tokens(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let rows: Vec<f64> = m.transpose().as_slice().to_vec();
    vgsb::write(
        path,
        &Array::new(Dtype::F32, vec![m.nrows(), m.ncols()], rows),
    )
}

fn read_token_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let a = vgsb::read(path)?;
    if a.dims.len() != 2 {
        return Err(Error::Format {
            path: path.into(),
            msg: "expected an N×d array".into(),
        });
    }
    Ok(DMatrix::from_row_slice(a.dims[0], a.dims[1], &a.data))
}

pub fn load_tokens(qtok: &Path, ktok: &Path) -> Result<TokenSet> {
    TokenSet::new(read_token_matrix(qtok)?, read_token_matrix(ktok)?)
}

pub fn load_descriptor(path: &Path) -> Result<DVector<f64>> {
    let a = vgsb::read(path)?;
    if a.dims.len() != 1 {
        return Err(Error::Format {
            path: path.into(),
            msg: "expected a vector".into(),
        });
    }
    let v = DVector::from_vec(a.data);
    // Stored as f32; renormalize to restore the unit-norm invariant to f64 precision.
    let n = v.norm();
    if n == 0.0 {
        return Err(Error::Format {
            path: path.into(),
            msg: "zero descriptor".into(),
        });
    }
    Ok(v / n)
}

/// Loads one keyframe copy. Descriptor and tokens come from the shared frame entry.
pub fn load_keyframe(
    dir: &Path,
    files: &KeyframeFiles,
    frame: &FrameEntry,
    tokens: Option<Arc<TokenSet>>,
) -> Result<Keyframe> {
    let depth = read_grid(&dir.join(&files.depth))?;
    let conf = read_grid(&dir.join(&files.conf))?;
    let k_arr = vgsb::read_shaped(&dir.join(&files.k), &[3, 3])?;
    let pose_arr = vgsb::read_shaped(&dir.join(&files.pose), &[4, 4])?;
    let k = Intrinsics::from_nearly_upper(Matrix3::from_row_slice(&k_arr.data))?;
    let t_first = Se3::from_matrix4(&Matrix4::from_row_slice(&pose_arr.data))?;
    let descriptor = match &frame.desc {
        Some(p) => Some(load_descriptor(&dir.join(p))?),
        None => None,
    };
    let kf = Keyframe {
        frame_id: files.frame_id,
        timestamp: frame.timestamp,
        k,
        t_first,
        depth,
        conf,
        descriptor,
        tokens,
    };
    kf.validate()?;
    Ok(kf)
}
