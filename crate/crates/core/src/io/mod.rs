//! File interchange: FPT tensors, PGM masks and prompt-scheme JSON.

mod pgm;
mod scheme;
mod tensor;

pub use pgm::{decode_pgm, encode_pgm, load_mask, save_mask, save_raster};
pub use scheme::{load_prompt_scheme, save_prompt_scheme, scheme_from_json, scheme_to_json};
pub use tensor::{
    decode_tensor, encode_tensor, load_tensor, save_tensor, TensorFile, TENSOR_MAGIC,
};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a feature tensor and places it on the grid of a
/// `image_width x image_height` image.
pub fn load_feature_map(
    path: impl AsRef<Path>,
    image_width: usize,
    image_height: usize,
    patch_size: usize,
    stride: usize,
) -> Result<crate::matching::FeatureMap<f32>> {
    let tensor = load_tensor(path)?;
    let grid = crate::patching::build_patch_grid(image_width, image_height, patch_size, stride)?;
    crate::matching::FeatureMap::from_tensor(&tensor, grid)
}

/// Grid implied by a rank-3 `rows x cols x dim` tensor: the smallest image
/// with exactly that many windows.
pub fn infer_grid(
    tensor: &TensorFile,
    patch_size: usize,
    stride: usize,
) -> Result<crate::patching::PatchGrid> {
    match tensor.shape() {
        [rows, cols, _] => crate::patching::PatchGrid::from_shape(*rows, *cols, patch_size, stride),
        shape => Err(Error::InvalidGrid(format!(
            "cannot infer a grid from rank-{} tensor {shape:?}; give the image size",
            shape.len()
        ))),
    }
}
