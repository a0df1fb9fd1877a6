use std::path::Path;

use crate::error::{Error, Result};
use crate::mask::MaskImage;

// Rasters larger than this are rejected as a header overflow.
const MAX_PIXELS: u64 = 1 << 32;

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    data_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let magic = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(Error::UnsupportedFormat(format!(
            "expected binary PGM magic `P5`, got `{magic}`"
        )));
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::UnsupportedFormat("malformed PGM header".into()));
        }
        let digits = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = digits
            .parse::<u64>()
            .map_err(|_| Error::DimensionOverflow {
                width: u64::MAX,
                height: u64::MAX,
            })?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::UnsupportedFormat("malformed PGM header".into())),
    }
    let [width, height, maxval] = fields;
    if width.checked_mul(height).is_none_or(|n| n > MAX_PIXELS) {
        return Err(Error::DimensionOverflow { width, height });
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedFormat(format!(
            "PGM maxval {maxval} not supported (8-bit only)"
        )));
    }
    Ok(Header {
        width: width as usize,
        height: height as usize,
        maxval: maxval as u32,
        data_offset: pos,
    })
}

/// Decodes an 8-bit P5 raster into `(width, height, pixels)`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let header = parse_header(bytes)?;
    let n = header.width * header.height;
    let body = &bytes[header.data_offset..];
    if body.len() < n {
        return Err(Error::TruncatedData {
            expected: n,
            actual: body.len(),
        });
    }
    debug_assert!(header.maxval <= 255);
    Ok((header.width, header.height, body[..n].to_vec()))
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<MaskImage> {
    let (w, h, pixels) = decode_pgm(&super::read_bytes(path.as_ref())?)?;
    MaskImage::from_raster(w, h, &pixels)
}

/// Writes a mask as P5 with foreground at 255.
pub fn save_mask(mask: &MaskImage, path: impl AsRef<Path>) -> Result<()> {
    let pixels: Vec<u8> = mask.data().iter().map(|&v| v * 255).collect();
    save_raster(mask.width(), mask.height(), &pixels, path)
}

pub fn save_raster(
    width: usize,
    height: usize,
    pixels: &[u8],
    path: impl AsRef<Path>,
) -> Result<()> {
    super::write_bytes(path.as_ref(), &encode_pgm(width, height, pixels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(bytes: &[u8]) -> Result<MaskImage> {
        let (w, h, p) = decode_pgm(bytes)?;
        MaskImage::from_raster(w, h, &p)
    }

    #[test]
    fn thresholds_nonzero() {
        let m = mask_from(&encode_pgm(2, 2, &[0, 255, 0, 128])).unwrap();
        assert_eq!(m.data(), &[0, 1, 0, 1]);
    }

    #[test]
    fn all_zero() {
        let m = mask_from(&encode_pgm(3, 2, &[0; 6])).unwrap();
        assert_eq!(m.count_ones(), 0);
    }

    #[test]
    fn header_with_comment() {
        let bytes = b"P5\n# made by hand\n2 1\n255\n\x01\x00";
        let m = mask_from(bytes).unwrap();
        assert_eq!(m.data(), &[1, 0]);
    }

    #[test]
    fn rejects_other_magic() {
        assert!(matches!(
            mask_from(b"P2\n1 1\n255\n0"),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(
            mask_from(b"\x89PNG"),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn rejects_overflowing_dimensions() {
        assert!(matches!(
            mask_from(b"P5\n4294967296 4294967296\n255\n"),
            Err(Error::DimensionOverflow { .. })
        ));
        assert!(matches!(
            mask_from(b"P5\n99999999999999999999999 1\n255\n"),
            Err(Error::DimensionOverflow { .. })
        ));
    }

    #[test]
    fn rejects_truncated_body() {
        assert!(matches!(
            mask_from(b"P5\n2 2\n255\n\x00"),
            Err(Error::TruncatedData { .. })
        ));
    }
}
