//! CNDT tensor files.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | content                                         |
//! |--------------|-------------------------------------------------|
//! | 4            | magic `CNDT`                                    |
//! | 1            | version, always 1                               |
//! | 1            | dtype: 0 f32, 1 f64, 2 complex f32, 3 complex f64 |
//! | 1            | ndim (>= 1)                                     |
//! | 4 * ndim     | dims as u32                                     |
//! | rest         | row-major samples; complex as (re, im) pairs    |

use std::fs;
use std::path::Path;

use num_complex::{Complex32, Complex64};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"CNDT";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    F64 = 1,
    ComplexF32 = 2,
    ComplexF64 = 3,
}

impl DType {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            2 => Ok(DType::ComplexF32),
            3 => Ok(DType::ComplexF64),
            other => Err(Error::BadDtype(other)),
        }
    }

    /// Bytes per sample.
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
            DType::ComplexF32 => 8,
            DType::ComplexF64 => 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    ComplexF32(Vec<Complex32>),
    ComplexF64(Vec<Complex64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::ComplexF32(_) => DType::ComplexF32,
            TensorData::ComplexF64(_) => DType::ComplexF64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::ComplexF32(v) => v.len(),
            TensorData::ComplexF64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_f64(self) -> Result<Vec<f64>> {
        match self {
            TensorData::F64(v) => Ok(v),
            other => Err(Error::InvalidArgument(format!(
                "expected f64 payload, found {:?}",
                other.dtype()
            ))),
        }
    }

    pub fn into_complex64(self) -> Result<Vec<Complex64>> {
        match self {
            TensorData::ComplexF64(v) => Ok(v),
            other => Err(Error::InvalidArgument(format!(
                "expected complex f64 payload, found {:?}",
                other.dtype()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

/// Serializes to the CNDT byte layout.
pub fn encode(dims: &[usize], data: &TensorData) -> Result<Vec<u8>> {
    if dims.is_empty() {
        return Err(Error::InvalidArgument("ndim must be >= 1".into()));
    }
    if dims.len() > u8::MAX as usize {
        return Err(Error::InvalidArgument(format!("ndim {} > 255", dims.len())));
    }
    let count: usize = dims.iter().product();
    if count != data.len() {
        return Err(Error::Shape(format!(
            "dims {dims:?} hold {count} samples, payload has {}",
            data.len()
        )));
    }
    let dtype = data.dtype();
    let mut out = Vec::with_capacity(7 + 4 * dims.len() + count * dtype.size());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(dtype.code());
    out.push(dims.len() as u8);
    for &d in dims {
        let d = u32::try_from(d)
            .map_err(|_| Error::InvalidArgument(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    match data {
        TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::ComplexF32(v) => v.iter().for_each(|x| {
            out.extend_from_slice(&x.re.to_le_bytes());
            out.extend_from_slice(&x.im.to_le_bytes());
        }),
        TensorData::ComplexF64(v) => v.iter().for_each(|x| {
            out.extend_from_slice(&x.re.to_le_bytes());
            out.extend_from_slice(&x.im.to_le_bytes());
        }),
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<TensorFile> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            expected: 7,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if bytes.len() < 7 {
        return Err(Error::Truncated {
            expected: 7,
            found: bytes.len(),
        });
    }
    if bytes[4] != VERSION {
        return Err(Error::BadVersion(bytes[4]));
    }
    let dtype = DType::from_code(bytes[5])?;
    let ndim = bytes[6] as usize;
    if ndim == 0 {
        return Err(Error::InvalidArgument("ndim must be >= 1".into()));
    }
    let header = 7 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::Truncated {
            expected: header,
            found: bytes.len(),
        });
    }
    let dims: Vec<usize> = bytes[7..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let count: usize = dims.iter().product();
    let expected = header + count * dtype.size();
    if bytes.len() != expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let payload = &bytes[header..];
    let data = match dtype {
        DType::F32 => TensorData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        DType::F64 => TensorData::F64(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        DType::ComplexF32 => TensorData::ComplexF32(
            payload
                .chunks_exact(8)
                .map(|c| {
                    Complex32::new(
                        f32::from_le_bytes(c[..4].try_into().unwrap()),
                        f32::from_le_bytes(c[4..].try_into().unwrap()),
                    )
                })
                .collect(),
        ),
        DType::ComplexF64 => TensorData::ComplexF64(
            payload
                .chunks_exact(16)
                .map(|c| {
                    Complex64::new(
                        f64::from_le_bytes(c[..8].try_into().unwrap()),
                        f64::from_le_bytes(c[8..].try_into().unwrap()),
                    )
                })
                .collect(),
        ),
    };
    Ok(TensorFile { dims, data })
}

pub fn save_tensor(path: impl AsRef<Path>, dims: &[usize], data: &TensorData) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(dims, data)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<TensorFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
