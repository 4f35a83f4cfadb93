//! ATTN v1 binary tensor codec.
//!
//! Layout (all integers and floats little-endian):
//!
//! | offset      | size       | field                                  |
//! |-------------|------------|----------------------------------------|
//! | 0           | 4          | magic `b"ATTN"`                        |
//! | 4           | 4          | format version, `u32` = 1              |
//! | 8           | 1          | dtype code, `0` = f32le                |
//! | 9           | 1          | ndim                                   |
//! | 10          | 8 * ndim   | dimension sizes, `u64` each            |
//! | 10 + 8*ndim | 4 * numel  | row-major `f32` payload                |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayView2, ArrayView3};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"ATTN";
pub const FORMAT_VERSION: u32 = 1;

const FIXED_HEADER_LEN: usize = 4 + 4 + 1 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32Le = 0,
}

impl DType {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F32Le),
            _ => None,
        }
    }
}

/// Dense, non-negative, finite attention array in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnTensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl AttnTensor {
    /// Builds a tensor after checking shape/data agreement, finiteness and
    /// non-negativity.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        check_shape(&shape)?;
        let numel = numel(&shape)?;
        if numel != data.len() {
            return Err(Error::Validation(format!(
                "shape {shape:?} holds {numel} elements but data has {}",
                data.len()
            )));
        }
        check_elements(&data)?;
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        check_shape(&shape)?;
        let n = numel(&shape)?;
        Ok(Self {
            shape,
            data: vec![0.0; n],
        })
    }

    pub fn dtype(&self) -> DType {
        DType::F32Le
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn view3(&self) -> Result<ArrayView3<'_, f32>> {
        match *self.shape.as_slice() {
            [a, b, c] => Ok(ArrayView3::from_shape((a, b, c), &self.data).expect("length checked at construction")),
            _ => Err(Error::shape(format!("expected a 3D tensor, got shape {:?}", self.shape))),
        }
    }

    pub fn view2(&self) -> Result<ArrayView2<'_, f32>> {
        match *self.shape.as_slice() {
            [a, b] => Ok(ArrayView2::from_shape((a, b), &self.data).expect("length checked at construction")),
            _ => Err(Error::shape(format!("expected a 2D tensor, got shape {:?}", self.shape))),
        }
    }

    /// Size of the serialized form in bytes.
    pub fn encoded_len(&self) -> usize {
        FIXED_HEADER_LEN + 8 * self.shape.len() + 4 * self.data.len()
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > u8::MAX as usize {
        return Err(Error::Validation(format!(
            "ndim must be in 1..=255, got {}",
            shape.len()
        )));
    }
    if let Some(pos) = shape.iter().position(|&d| d == 0) {
        return Err(Error::Validation(format!(
            "dimension {pos} of shape {shape:?} is zero"
        )));
    }
    Ok(())
}

fn numel(shape: &[usize]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Validation(format!("shape {shape:?} overflows usize")))
}

fn check_elements(data: &[f32]) -> Result<()> {
    for (index, &value) in data.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::InvalidElement {
                index,
                value,
                reason: "not finite",
            });
        }
        if value < 0.0 {
            return Err(Error::InvalidElement {
                index,
                value,
                reason: "negative",
            });
        }
    }
    Ok(())
}

/// Serializes `tensor` as ATTN v1 and returns the number of bytes written.
pub fn write_tensor<W: Write>(tensor: &AttnTensor, mut sink: W) -> Result<usize> {
    check_shape(&tensor.shape)?;
    check_elements(&tensor.data)?;

    let mut header = Vec::with_capacity(FIXED_HEADER_LEN + 8 * tensor.ndim());
    header.extend_from_slice(&MAGIC);
    header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    header.push(tensor.dtype().code());
    header.push(tensor.ndim() as u8);
    for &d in &tensor.shape {
        header.extend_from_slice(&(d as u64).to_le_bytes());
    }
    sink.write_all(&header)?;

    let mut payload = Vec::with_capacity(4 * tensor.data.len());
    for v in &tensor.data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    sink.write_all(&payload)?;
    sink.flush()?;
    Ok(header.len() + payload.len())
}

/// Parses an ATTN v1 stream.
pub fn read_tensor<R: Read>(mut source: R) -> Result<AttnTensor> {
    let mut fixed = [0u8; FIXED_HEADER_LEN];
    read_header_bytes(&mut source, &mut fixed)?;

    if fixed[0..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"ATTN\"",
            String::from_utf8_lossy(&fixed[0..4])
        )));
    }
    let version = u32::from_le_bytes(fixed[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    if DType::from_code(fixed[8]).is_none() {
        return Err(Error::Format(format!("unsupported dtype code {}", fixed[8])));
    }
    let ndim = fixed[9] as usize;
    if ndim == 0 {
        return Err(Error::Format("ndim is zero".into()));
    }

    let mut dims_raw = vec![0u8; 8 * ndim];
    read_header_bytes(&mut source, &mut dims_raw)?;
    let mut shape = Vec::with_capacity(ndim);
    for chunk in dims_raw.chunks_exact(8) {
        let d = u64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        let d = usize::try_from(d)
            .map_err(|_| Error::Format(format!("dimension {d} does not fit in memory")))?;
        if d == 0 {
            return Err(Error::Format(format!("zero-sized dimension in shape {shape:?}")));
        }
        shape.push(d);
    }
    let count = numel(&shape).map_err(|e| Error::Format(e.to_string()))?;
    let expected = (count as u64)
        .checked_mul(4)
        .ok_or_else(|| Error::Format(format!("shape {shape:?} is too large")))?;

    // Read at most one byte past the expected payload: enough to tell
    // truncation from trailing garbage without trusting the header for an
    // allocation size.
    let mut payload = Vec::new();
    source
        .by_ref()
        .take(expected + 1)
        .read_to_end(&mut payload)?;
    let actual = payload.len() as u64;
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(Error::Format(format!(
            "trailing bytes after {expected}-byte payload"
        )));
    }

    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    check_elements(&data)?;
    Ok(AttnTensor { shape, data })
}

fn read_header_bytes<R: Read>(source: &mut R, buf: &mut [u8]) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(Error::Format(format!(
                    "header truncated after {filled} of {} bytes",
                    buf.len()
                )))
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

pub fn write_tensor_file(tensor: &AttnTensor, path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_tensor(tensor, BufWriter::new(file))
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<AttnTensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tensor(BufReader::new(file))
}
