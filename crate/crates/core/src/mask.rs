use crate::error::{Error, Result};

/// Binary raster mask, row-major, one byte per pixel with values in `{0, 1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl MaskImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        let expected = width.checked_mul(height).ok_or(Error::DimensionOverflow {
            width: width as u64,
            height: height as u64,
        })?;
        if data.len() != expected {
            return Err(Error::dims("mask data length", expected, data.len()));
        }
        if let Some(bad) = data.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidValue(format!(
                "mask values must be 0 or 1, found {bad}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Thresholds an 8-bit raster: zero stays 0, anything else becomes 1.
    pub fn from_raster(width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            pixels.iter().map(|&v| u8::from(v != 0)).collect(),
        )
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(x, y)));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = u8::from(value);
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn same_size(&self, other: &MaskImage) -> bool {
        self.width == other.width && self.height == other.height
    }
}
