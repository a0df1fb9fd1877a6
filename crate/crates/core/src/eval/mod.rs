//! Segmentation quality, synthetic fixtures and the sweep harness.

mod manifest;
mod sweep;
mod synthetic;

pub use manifest::{load_manifest, save_manifest, ManifestEntry};
pub use sweep::{
    format_fraction, load_grid, parse_grid, prepare_case, report_csv, sweep, CaseData, EvalRecord,
    SweepCase, SweepConfig,
};
pub use synthetic::{generate_synthetic, Shape, SyntheticCase, SyntheticSample, SyntheticSuite};

use crate::error::{Error, Result};
use crate::mask::MaskImage;

/// Dice similarity `2|P∩T| / (|P| + |T|)`; two empty masks score 1.
pub fn dice(pred: &MaskImage, truth: &MaskImage) -> Result<f64> {
    if !pred.same_size(truth) {
        return Err(Error::dims(
            "mask size",
            format!("{}x{}", truth.width(), truth.height()),
            format!("{}x{}", pred.width(), pred.height()),
        ));
    }
    let (mut both, mut p, mut t) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.data().iter().zip(truth.data()) {
        p += a as usize;
        t += b as usize;
        both += (a & b) as usize;
    }
    if p + t == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (p + t) as f64)
}
