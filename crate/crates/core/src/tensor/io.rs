//! VTensor files.
//!
//! Little-endian layout, no padding:
//!
//! ```text
//! magic   "WFVT"          4 bytes
//! version u32 = 1
//! dtype   u32 = 0         (f32)
//! ndim    u32 = 4
//! dims    4 x u32         (c, t, h, w)
//! payload c*t*h*w x f32   row-major
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Shape, VideoTensor};
use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"WFVT";
pub const TENSOR_VERSION: u32 = 1;
const DTYPE_F32: u32 = 0;
const HEADER_LEN: usize = 4 + 3 * 4 + 4 * 4;

pub fn write_tensor<W: Write>(out: &mut W, tensor: &VideoTensor) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + tensor.len() * 4);
    buf.extend_from_slice(TENSOR_MAGIC);
    for v in [TENSOR_VERSION, DTYPE_F32, 4] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for d in tensor.shape().as_array() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for x in tensor.data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    out.write_all(&buf)
}

/// Parses a complete VTensor image. Trailing bytes are rejected.
pub fn read_tensor(bytes: &[u8]) -> Result<VideoTensor> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[0..4] != TENSOR_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"WFVT\"",
            String::from_utf8_lossy(&bytes[0..4])
        )));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let (version, dtype, ndim) = (word(0), word(1), word(2));
    if version != TENSOR_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    if dtype != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype code {dtype}")));
    }
    if ndim != 4 {
        return Err(Error::Format(format!("expected ndim 4, found {ndim}")));
    }
    let dims: Vec<usize> = (3..7).map(|i| word(i) as usize).collect();
    let shape = Shape::new(dims[0], dims[1], dims[2], dims[3])
        .map_err(|e| Error::Format(format!("invalid dims {dims:?}: {e}")))?;
    let payload = shape
        .len()
        .checked_mul(4)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
    if bytes.len() < payload {
        return Err(Error::Truncated {
            expected: payload,
            found: bytes.len(),
        });
    }
    if bytes.len() > payload {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() - payload
        )));
    }
    let data: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    VideoTensor::from_vec(shape, data)
}

pub fn save_tensor(tensor: &VideoTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_tensor(&mut buf, tensor).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<VideoTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_tensor(&bytes)
}
