//! One-shot reference guided point-prompt engineering.
//!
//! Given patch features for an annotated reference image and for a target
//! image, the engine builds a dense patch correspondence matrix, derives
//! positive and negative point prompts by forward/backward nearest-neighbour
//! matching, and refines them in pixel space (exclusive, sparse and hard
//! sampling) before handing the scheme to a promptable segmenter.
//!
//! The numeric core ([`matching`]) is generic over the feature scalar via
//! [`Scalar`]; `f32` is what the tensor interchange format stores, and the
//! aliases at the crate root name the common instantiations.
//!
//! # Modules
//! - [`io`]: FPT tensor files, PGM masks, prompt-scheme JSON.
//! - [`patching`]: patch grid geometry and reference labelling.
//! - [`matching`]: correspondence matrix, forward/backward matching, hard candidates.
//! - [`spatial`]: prompt points and pixel-space refinement.
//! - [`pipeline`]: stage orchestration, configuration and trace.
//! - [`segmenter`]: baseline nearest-prompt segmenter and the external adapter.
//! - [`eval`]: Dice, synthetic fixtures and the sweep harness.

pub mod config_text;
mod error;
pub mod eval;
pub mod io;
pub mod mask;
pub mod matching;
pub mod patching;
pub mod pipeline;
mod scalar;
pub mod segmenter;
pub mod spatial;

pub use error::{Error, Result};
pub use mask::MaskImage;
pub use matching::{
    backward_match, correspondence_matrix, forward_match, select_hard_negatives, CandidatePrompt,
    CorrespondenceMatrix, FeatureMap, HardMeanScope,
};
pub use patching::{build_patch_grid, label_reference_patches, PatchGrid, PatchLabel};
pub use pipeline::{run_pipeline, validate_config, PipelineConfig, PipelineTrace};
pub use scalar::Scalar;
pub use spatial::{PromptClass, PromptPoint, PromptScheme, RadiusBase, RadiusSpec};

pub type FeatureMapF32 = FeatureMap<f32>;
pub type FeatureMapF64 = FeatureMap<f64>;
pub type CorrespondenceMatrixF32 = CorrespondenceMatrix<f32>;
pub type CorrespondenceMatrixF64 = CorrespondenceMatrix<f64>;
pub type CandidatePromptF32 = CandidatePrompt<f32>;
pub type CandidatePromptF64 = CandidatePrompt<f64>;
