use std::path::PathBuf;

use crate::layer::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("state {index} has no conjugate partner within tolerance")]
    UnpairedState { index: usize },

    #[error("cannot pair conjugates of an odd number of states ({n})")]
    OddStateCount { n: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("Re(lambda[{index}]) = {re} is not negative")]
    NonHurwitz { index: usize, re: f64 },

    #[error("discretized pole {index} rounds onto or outside the unit circle (|lambda_bar| = {modulus})")]
    DiscretizationUnstable { index: usize, modulus: f64 },

    #[error("rate ratio must be positive and finite, got {0}")]
    NonPositiveRatio(f64),

    #[error("channel mismatch: layer expects {expected} channels, signal has {found}")]
    ChannelMismatch { expected: usize, found: usize },

    #[error("state {index} is not strictly stable (|lambda_bar| = {modulus})")]
    UnstableState { index: usize, modulus: f64 },

    #[error("layer is not strictly stable (max |lambda_bar| = {modulus})")]
    UnstableLayer { modulus: f64 },

    #[error("keep mask prunes every state of the layer")]
    EmptyLayer,

    #[error("mask length {found} does not match layer order {expected}")]
    MaskLength { expected: usize, found: usize },

    #[error("pruning budget {requested} exceeds the {available} prunable states")]
    BudgetTooLarge { requested: usize, available: usize },

    #[error("ratio must lie in [0, 1], got {0}")]
    InvalidRatio(f64),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("validation failed:\n{0}")]
    ValidationFailed(ValidationReport),

    #[error("unsupported schema version {found:?} (expected {expected:?})")]
    SchemaMismatch { found: String, expected: String },

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable tag, used by the CLI error envelope.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnpairedState { .. } => "UnpairedState",
            Error::OddStateCount { .. } => "OddStateCount",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NonHurwitz { .. } => "NonHurwitz",
            Error::DiscretizationUnstable { .. } => "DiscretizationUnstable",
            Error::NonPositiveRatio(_) => "NonPositiveRatio",
            Error::ChannelMismatch { .. } => "ChannelMismatch",
            Error::UnstableState { .. } => "UnstableState",
            Error::UnstableLayer { .. } => "UnstableLayer",
            Error::EmptyLayer => "EmptyLayer",
            Error::MaskLength { .. } => "MaskLength",
            Error::BudgetTooLarge { .. } => "BudgetTooLarge",
            Error::InvalidRatio(_) => "InvalidRatio",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::ValidationFailed(_) => "ValidationFailed",
            Error::SchemaMismatch { .. } => "SchemaMismatch",
            Error::MalformedFile { .. } => "MalformedFile",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }
}
