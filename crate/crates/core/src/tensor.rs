//! `TNSR` binary tensors.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "TNSR" | version: u8 = 1 | ndim: u32 | dims: ndim x u32 | payload: prod(dims) x f32
//! ```
//!
//! The payload is row-major. NaN is a legal stored value; consumers that
//! require finite data treat it as "invalid".

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"TNSR";
pub const VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

fn element_count(dims: &[u32]) -> Result<usize> {
    let mut count: u64 = 1;
    for &d in dims {
        count = count.checked_mul(d as u64).ok_or(Error::DimOverflow)?;
        if count > u32::MAX as u64 {
            return Err(Error::DimOverflow);
        }
    }
    Ok(count as usize)
}

impl Tensor {
    pub fn new(dims: Vec<u32>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidArgument("tensor needs at least one dim".into()));
        }
        let count = element_count(&dims)?;
        if count != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "dims {dims:?} hold {count} elements, payload has {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_f64(dims: Vec<u32>, data: &[f64]) -> Result<Self> {
        Self::new(dims, data.iter().map(|&v| v as f32).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + 4 * (self.dims.len() + self.data.len()));
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let header = |n: usize| -> Result<&[u8]> {
            bytes.get(..n).ok_or(Error::TruncatedPayload {
                expected: n,
                found: bytes.len(),
            })
        };
        let head = header(9)?;
        let magic: [u8; 4] = head[..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        if head[4] != VERSION {
            return Err(Error::VersionMismatch(head[4]));
        }
        let ndim = u32::from_le_bytes(head[5..9].try_into().expect("4 bytes")) as usize;
        if ndim == 0 {
            return Err(Error::Format("tensor has zero dimensions".into()));
        }
        let dims_end = 9usize
            .checked_add(ndim.checked_mul(4).ok_or(Error::DimOverflow)?)
            .ok_or(Error::DimOverflow)?;
        let dims: Vec<u32> = header(dims_end)?[9..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let count = element_count(&dims)?;
        let expected = dims_end + 4 * count;
        if bytes.len() < expected {
            return Err(Error::TruncatedPayload {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                bytes.len() - expected
            )));
        }
        let data = bytes[dims_end..]
            .chunks_exact(4)
            .map(|c| f32::from_bits(u32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        Ok(Self { dims, data })
    }
}

pub fn save_tensor(path: impl AsRef<Path>, dims: &[u32], payload: &[f32]) -> Result<()> {
    let path = path.as_ref();
    let tensor = Tensor::new(dims.to_vec(), payload.to_vec())?;
    fs::write(path, tensor.encode()).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<(Vec<u32>, Vec<f32>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let t = Tensor::decode(&bytes)?;
    Ok((t.dims, t.data))
}
