//! `.vgsb` array blobs.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "VGSB" | u16 version = 1 | u8 dtype (1 = f32, 2 = f64) | u8 rank | u32 dims[rank] | payload
//! ```
//!
//! The payload is row-major.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VGSB";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 1,
    F64 = 2,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Dtype::F32),
            2 => Some(Dtype::F64),
            _ => None,
        }
    }
}

/// A decoded blob; values are widened to `f64` regardless of storage type.
#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub dtype: Dtype,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Array {
    pub fn new(dtype: Dtype, dims: Vec<usize>, data: Vec<f64>) -> Self {
        Self { dtype, dims, data }
    }
}

pub fn encode(array: &Array) -> Result<Vec<u8>> {
    let expected: usize = array.dims.iter().product();
    if expected != array.data.len() || array.dims.len() > u8::MAX as usize {
        return Err(Error::DimensionMismatch(format!(
            "dims {:?} do not match {} values",
            array.dims,
            array.data.len()
        )));
    }
    let mut out = Vec::with_capacity(8 + 4 * array.dims.len() + array.dtype.size() * expected);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(array.dtype as u8);
    out.push(array.dims.len() as u8);
    for &d in &array.dims {
        let d = u32::try_from(d)
            .map_err(|_| Error::DimensionMismatch(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    match array.dtype {
        Dtype::F32 => array
            .data
            .iter()
            .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        Dtype::F64 => array
            .data
            .iter()
            .for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Array, String> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err("missing VGSB magic".into());
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let dtype = Dtype::from_code(bytes[6]).ok_or_else(|| format!("unknown dtype {}", bytes[6]))?;
    let rank = bytes[7] as usize;
    let header = 8 + 4 * rank;
    if bytes.len() < header {
        return Err("truncated header".into());
    }
    let dims: Vec<usize> = bytes[8..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() != count * dtype.size() {
        return Err(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            count * dtype.size()
        ));
    }
    let data = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    };
    Ok(Array { dtype, dims, data })
}

pub fn write(path: &Path, array: &Array) -> Result<()> {
    fs::write(path, encode(array)?)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Array> {
    let bytes = fs::read(path)?;
    decode(&bytes).map_err(|msg| Error::Format {
        path: path.to_path_buf(),
        msg,
    })
}

/// Reads a blob and checks its shape.
pub fn read_shaped(path: &Path, dims: &[usize]) -> Result<Array> {
    let a = read(path)?;
    if a.dims != dims {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("expected dims {:?}, found {:?}", dims, a.dims),
        });
    }
    Ok(a)
}
