//! The `LDIR` tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size        field
//! 0       4           magic "LDIR"
//! 4       4           u32 version (= 1)
//! 8       4           u32 ndim
//! 12      4 * ndim    u32 dims
//! ...     8 * prod    f64 payload, IEEE-754 little-endian, row-major
//! ```
//!
//! Readers reject trailing bytes after the payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: [u8; 4] = *b"LDIR";
pub const TENSOR_VERSION: u32 = 1;

/// An n-dimensional block of finite scalars as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected = element_count(&dims)?;
        if expected != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "dims {dims:?} imply {expected} scalars, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    /// Rows of a rank-2 tensor.
    pub fn rows(&self) -> Result<Vec<Vec<f64>>> {
        let [rows, cols] = self.dims[..] else {
            return Err(Error::ShapeMismatch(format!(
                "expected a rank-2 tensor, got dims {:?}",
                self.dims
            )));
        };
        Ok((0..rows)
            .map(|i| self.data[i * cols..(i + 1) * cols].to_vec())
            .collect())
    }
}

fn element_count(dims: &[usize]) -> Result<usize> {
    dims.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d)
            .ok_or_else(|| Error::Malformed(format!("dims {dims:?} overflow")))
    })
}

pub fn encode_tensor(dims: &[usize], data: &[f64]) -> Result<Vec<u8>> {
    let count = element_count(dims)?;
    if count != data.len() {
        return Err(Error::ShapeMismatch(format!(
            "dims {dims:?} imply {count} scalars, got {}",
            data.len()
        )));
    }
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let mut out = Vec::with_capacity(12 + 4 * dims.len() + 8 * data.len());
    out.extend_from_slice(&TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(dims.len(), "ndim")?.to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&to_u32(d, "dimension")?.to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let mut cur = Cursor::new(bytes);
    let magic = cur.magic()?;
    if magic != TENSOR_MAGIC {
        return Err(Error::BadMagic {
            expected: TENSOR_MAGIC,
            found: magic,
        });
    }
    let version = cur.u32("version")?;
    if version != TENSOR_VERSION {
        return Err(Error::VersionMismatch {
            expected: TENSOR_VERSION,
            found: version,
        });
    }
    let ndim = cur.u32("ndim")? as usize;
    let mut dims = Vec::with_capacity(ndim.min(64));
    for _ in 0..ndim {
        dims.push(cur.u32("dims")? as usize);
    }
    let count = element_count(&dims)?;
    let data = cur.f64s(count)?;
    cur.finish()?;
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(Tensor { dims, data })
}

pub fn write_tensor(path: impl AsRef<Path>, dims: &[usize], data: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_tensor(dims, data)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes)
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidParameter(format!("{what} {v} exceeds u32")))
}

/// Little-endian reader over a byte slice; shared with the checkpoint format.
pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let remaining = self.bytes.len() - self.pos;
        if remaining < n {
            return Err(Error::Truncated(format!(
                "{what}: need {n} bytes, {remaining} remain"
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn magic(&mut self) -> Result<[u8; 4]> {
        let s = self.take(4, "magic")?;
        Ok([s[0], s[1], s[2], s[3]])
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let s = self.take(4, what)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    }

    pub(crate) fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let needed = count
            .checked_mul(8)
            .ok_or_else(|| Error::Malformed("payload size overflow".into()))?;
        let remaining = self.bytes.len() - self.pos;
        if remaining < needed {
            return Err(Error::Truncated(format!(
                "header declares {count} scalars ({needed} bytes), payload has {remaining} bytes"
            )));
        }
        let s = self.take(needed, "payload")?;
        Ok(s.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Malformed(format!(
                "{} trailing bytes after payload",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}
