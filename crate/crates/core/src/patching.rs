//! Sliding-window patch grids.
//!
//! Only full windows are kept; a partial window at the right or bottom
//! border is dropped rather than padded. Patches are indexed row-major.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::MaskImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    image_width: usize,
    image_height: usize,
    patch_size: usize,
    stride: usize,
    rows: usize,
    cols: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PatchLabel {
    Positive,
    Negative,
}

pub fn build_patch_grid(
    image_width: usize,
    image_height: usize,
    patch_size: usize,
    stride: usize,
) -> Result<PatchGrid> {
    if patch_size == 0 {
        return Err(Error::InvalidGrid("patch size must be at least 1".into()));
    }
    if stride == 0 {
        return Err(Error::InvalidGrid("stride must be at least 1".into()));
    }
    if stride > patch_size {
        return Err(Error::InvalidGrid(format!(
            "stride {stride} exceeds patch size {patch_size}"
        )));
    }
    if patch_size > image_width || patch_size > image_height {
        return Err(Error::InvalidGrid(format!(
            "patch size {patch_size} exceeds image {image_width}x{image_height}"
        )));
    }
    Ok(PatchGrid {
        image_width,
        image_height,
        patch_size,
        stride,
        rows: (image_height - patch_size) / stride + 1,
        cols: (image_width - patch_size) / stride + 1,
    })
}

impl PatchGrid {
    /// Smallest image that yields exactly `rows x cols` windows.
    pub fn from_shape(rows: usize, cols: usize, patch_size: usize, stride: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidGrid(
                "grid must have at least one row and column".into(),
            ));
        }
        build_patch_grid(
            (cols - 1) * stride + patch_size,
            (rows - 1) * stride + patch_size,
            patch_size,
            stride,
        )
    }

    pub fn image_width(&self) -> usize {
        self.image_width
    }

    pub fn image_height(&self) -> usize {
        self.image_height
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixel center of patch `index`, rounded down.
    pub fn patch_center(&self, index: usize) -> Result<(usize, usize)> {
        if index >= self.len() {
            return Err(Error::PatchIndexOutOfRange {
                index,
                len: self.len(),
            });
        }
        let (row, col) = (index / self.cols, index % self.cols);
        let half = self.patch_size / 2;
        Ok((col * self.stride + half, row * self.stride + half))
    }

    pub fn centers(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).map(|i| self.patch_center(i).expect("index in range"))
    }
}

pub fn patch_center(grid: &PatchGrid, index: usize) -> Result<(usize, usize)> {
    grid.patch_center(index)
}

/// A reference patch is positive iff the mask pixel under its center is set.
pub fn label_reference_patches(grid: &PatchGrid, mask: &MaskImage) -> Result<Vec<PatchLabel>> {
    if mask.width() != grid.image_width || mask.height() != grid.image_height {
        return Err(Error::dims(
            "reference mask size",
            format!("{}x{}", grid.image_width, grid.image_height),
            format!("{}x{}", mask.width(), mask.height()),
        ));
    }
    Ok(grid
        .centers()
        .map(|(x, y)| {
            if mask.get(x, y) {
                PatchLabel::Positive
            } else {
                PatchLabel::Negative
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        let g = build_patch_grid(64, 64, 16, 16).unwrap();
        assert_eq!((g.rows(), g.cols()), (4, 4));
        let g = build_patch_grid(64, 64, 16, 8).unwrap();
        assert_eq!((g.rows(), g.cols()), (7, 7));
        let g = build_patch_grid(16, 16, 16, 16).unwrap();
        assert_eq!((g.rows(), g.cols()), (1, 1));
        let g = build_patch_grid(70, 40, 16, 16).unwrap();
        assert_eq!((g.rows(), g.cols()), (2, 4));
    }

    #[test]
    fn grid_errors() {
        assert!(build_patch_grid(8, 64, 16, 16).is_err());
        assert!(build_patch_grid(64, 64, 16, 0).is_err());
        assert!(build_patch_grid(64, 64, 0, 1).is_err());
        assert!(build_patch_grid(64, 64, 8, 16).is_err());
    }

    #[test]
    fn centers() {
        let g = build_patch_grid(64, 64, 16, 16).unwrap();
        assert_eq!(g.patch_center(0).unwrap(), (8, 8));
        assert_eq!(g.patch_center(5).unwrap(), (24, 24));
        assert!(matches!(
            g.patch_center(16),
            Err(Error::PatchIndexOutOfRange { index: 16, len: 16 })
        ));

        let g = build_patch_grid(48, 32, 16, 8).unwrap();
        assert_eq!((g.rows(), g.cols()), (3, 5));
        assert_eq!(g.patch_center(g.len() - 1).unwrap(), (40, 24));
        for (x, y) in g.centers() {
            assert!(x < 48 && y < 32);
        }
    }

    #[test]
    fn from_shape_inverts_build() {
        let g = PatchGrid::from_shape(7, 5, 16, 8).unwrap();
        assert_eq!((g.rows(), g.cols()), (7, 5));
        assert_eq!((g.image_width(), g.image_height()), (48, 64));
    }

    #[test]
    fn labels_follow_center_pixel() {
        let g = build_patch_grid(64, 64, 16, 16).unwrap();
        let ones = MaskImage::from_fn(64, 64, |_, _| true);
        assert!(label_reference_patches(&g, &ones)
            .unwrap()
            .iter()
            .all(|&l| l == PatchLabel::Positive));
        let zeros = MaskImage::zeros(64, 64);
        assert!(label_reference_patches(&g, &zeros)
            .unwrap()
            .iter()
            .all(|&l| l == PatchLabel::Negative));

        let left = MaskImage::from_fn(64, 64, |x, _| x < 32);
        let labels = label_reference_patches(&g, &left).unwrap();
        for (i, label) in labels.iter().enumerate() {
            let (x, _) = g.patch_center(i).unwrap();
            assert_eq!(*label == PatchLabel::Positive, x < 32);
        }
    }

    #[test]
    fn label_size_mismatch() {
        let g = build_patch_grid(64, 64, 16, 16).unwrap();
        assert!(label_reference_patches(&g, &MaskImage::zeros(64, 63)).is_err());
    }
}
