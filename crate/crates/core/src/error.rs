use std::path::PathBuf;

use thiserror::Error;

use crate::pipeline::ConfigViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed tensor header: {0}")]
    TensorHeader(String),

    #[error("unsupported tensor dtype `{0}` (only f32 is supported)")]
    UnsupportedDtype(String),

    #[error("truncated tensor data: expected {expected} bytes, found {actual}")]
    TruncatedData { expected: usize, actual: usize },

    #[error("tensor has {actual} trailing bytes beyond the declared shape")]
    TrailingData { actual: usize },

    #[error("unsupported raster format: {0}")]
    UnsupportedFormat(String),

    #[error("raster dimensions {width}x{height} overflow")]
    DimensionOverflow { width: u64, height: u64 },

    #[error("invalid patch grid: {0}")]
    InvalidGrid(String),

    #[error("patch index {index} out of range for grid with {len} patches")]
    PatchIndexOutOfRange { index: usize, len: usize },

    #[error("{what}: expected {expected}, found {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        actual: String,
    },

    #[error("feature dimension mismatch: reference has {reference}, target has {target}")]
    FeatureDimMismatch { reference: usize, target: usize },

    #[error("feature map is empty")]
    EmptyFeatureMap,

    #[error("feature map contains a non-finite value at patch {patch}")]
    NonFiniteFeature { patch: usize },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid configuration: {}", format_violations(.0))]
    Config(Vec<ConfigViolation>),

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("prompt scheme has no positive points")]
    NoPositivePrompts,

    #[error("segmenter adapter exited with {status}: {stderr}")]
    AdapterFailed { status: String, stderr: String },

    #[error("segmenter adapter timed out after {secs} s")]
    AdapterTimeout { secs: u64 },

    #[error("segmenter adapter did not write an output mask at {0}")]
    AdapterOutputMissing(PathBuf),

    #[error("segmenter adapter output is malformed: {0}")]
    AdapterOutputMalformed(String),

    #[error("invalid adapter command: {0}")]
    AdapterCommand(String),

    #[error("degenerate synthetic geometry: {0}")]
    DegenerateGeometry(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(what: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            what,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

fn format_violations(violations: &[ConfigViolation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
