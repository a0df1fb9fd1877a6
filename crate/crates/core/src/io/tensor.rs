use std::path::Path;

use crate::error::{Error, Result};

/// Leading bytes of every tensor file.
pub const TENSOR_MAGIC: &[u8; 6] = b"FPT1\n\0";

const MAX_HEADER_LINE: usize = 256;

/// Dense little-endian `f32` tensor, row-major.
///
/// Rank 2 holds a `num_patches x feature_dim` matrix, rank 3 a
/// `rows x cols x feature_dim` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorFile {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl TensorFile {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if !(2..=3).contains(&shape.len()) {
            return Err(Error::TensorHeader(format!(
                "tensor rank must be 2 or 3, got {}",
                shape.len()
            )));
        }
        let count = element_count(&shape)?;
        if count != data.len() {
            return Err(Error::dims("tensor element count", count, data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn dtype(&self) -> &'static str {
        "f32"
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Number of leading "patch" entries, i.e. all dimensions but the last.
    pub fn num_vectors(&self) -> usize {
        self.shape[..self.shape.len() - 1].iter().product()
    }

    pub fn vector_dim(&self) -> usize {
        *self.shape.last().expect("rank >= 2")
    }
}

fn element_count(shape: &[usize]) -> Result<usize> {
    shape.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d)
            .ok_or_else(|| Error::TensorHeader(format!("shape {shape:?} overflows")))
    })
}

pub fn encode_tensor(tensor: &TensorFile) -> Vec<u8> {
    let shape = tensor
        .shape
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let header = format!("dtype=f32\nshape={shape}\n\n");
    let mut out = Vec::with_capacity(TENSOR_MAGIC.len() + header.len() + tensor.data.len() * 4);
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(header.as_bytes());
    for v in &tensor.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn next_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    let rest = &bytes[*pos..];
    let end = rest
        .iter()
        .take(MAX_HEADER_LINE)
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::TensorHeader("unterminated header line".into()))?;
    let line = std::str::from_utf8(&rest[..end])
        .map_err(|_| Error::TensorHeader("header line is not ASCII".into()))?;
    *pos += end + 1;
    Ok(line)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<TensorFile> {
    if bytes.len() < TENSOR_MAGIC.len() || &bytes[..TENSOR_MAGIC.len()] != TENSOR_MAGIC {
        return Err(Error::TensorHeader("missing FPT1 magic".into()));
    }
    let mut pos = TENSOR_MAGIC.len();

    let dtype_line = next_line(bytes, &mut pos)?;
    let dtype = dtype_line
        .strip_prefix("dtype=")
        .ok_or_else(|| Error::TensorHeader(format!("expected `dtype=`, got `{dtype_line}`")))?;
    if dtype != "f32" {
        return Err(Error::UnsupportedDtype(dtype.to_string()));
    }

    let shape_line = next_line(bytes, &mut pos)?;
    let dims = shape_line
        .strip_prefix("shape=")
        .ok_or_else(|| Error::TensorHeader(format!("expected `shape=`, got `{shape_line}`")))?;
    let shape = dims
        .split(',')
        .map(|d| {
            d.parse::<usize>()
                .map_err(|_| Error::TensorHeader(format!("bad shape entry `{d}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if !(2..=3).contains(&shape.len()) {
        return Err(Error::TensorHeader(format!(
            "tensor rank must be 2 or 3, got {}",
            shape.len()
        )));
    }

    if !next_line(bytes, &mut pos)?.is_empty() {
        return Err(Error::TensorHeader("missing blank line after shape".into()));
    }

    let count = element_count(&shape)?;
    let expected = count
        .checked_mul(4)
        .ok_or_else(|| Error::TensorHeader("shape overflows".into()))?;
    let body = &bytes[pos..];
    if body.len() < expected {
        return Err(Error::TruncatedData {
            expected,
            actual: body.len(),
        });
    }
    if body.len() > expected {
        return Err(Error::TrailingData {
            actual: body.len() - expected,
        });
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(TensorFile { shape, data })
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<TensorFile> {
    decode_tensor(&super::read_bytes(path.as_ref())?)
}

pub fn save_tensor(tensor: &TensorFile, path: impl AsRef<Path>) -> Result<()> {
    super::write_bytes(path.as_ref(), &encode_tensor(tensor))
}
