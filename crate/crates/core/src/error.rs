use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("class {class} has {count} samples, at least {needed} required")]
    TooFewSamples {
        class: usize,
        count: usize,
        needed: usize,
    },

    #[error("dimension mismatch at index {index}: expected {expected}, got {got}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("class means coincide (|m| = {norm:e}); classes are indistinguishable by their means")]
    DegenerateMeans { norm: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("dense order-{order} tensor requested for D = {dim}, above the cap of {cap}")]
    DenseCapExceeded { order: usize, dim: usize, cap: usize },

    #[error("weights diverged at step {step} (|w| = {norm:e})")]
    Divergence { step: usize, norm: f64 },

    #[error("label {label} is out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("label {0} has no entry in the mapping")]
    UnmappedLabel(usize),

    #[error("binary labels required, dataset has {0} classes")]
    NonBinaryLabels(usize),

    #[error("zero vector where a direction is required")]
    ZeroVector,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("missing data file {0}")]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// Short stable identifier, used by the CLI's machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::TooFewSamples { .. } => "too_few_samples",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::DegenerateMeans { .. } => "degenerate_means",
            Error::Singular(_) => "singular",
            Error::DenseCapExceeded { .. } => "dense_cap_exceeded",
            Error::Divergence { .. } => "divergence",
            Error::LabelOutOfRange { .. } => "label_out_of_range",
            Error::UnmappedLabel(_) => "unmapped_label",
            Error::NonBinaryLabels(_) => "non_binary_labels",
            Error::ZeroVector => "zero_vector",
            Error::NonFinite(_) => "non_finite",
            Error::Unknown { .. } => "unknown",
            Error::Format { .. } => "format",
            Error::MissingFile(_) => "missing_file",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Config(_) => "config",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
