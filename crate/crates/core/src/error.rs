use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the `strad` library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("column `{0}` not present in header")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: non-finite value `{value}`")]
    NonFiniteValue {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, label column `{column}`: expected 0 or 1, found `{value}`")]
    NonBinaryLabel {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("channel count mismatch: expected {expected}, found {found}")]
    ChannelMismatch { expected: usize, found: usize },

    #[error("window length {window} exceeds series length {series}")]
    WindowTooLong { window: usize, series: usize },

    #[error("invalid stride {0}; must be positive")]
    InvalidStride(usize),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("trend fit needs at least 2 time steps, got {0}")]
    WindowTooShort(usize),

    #[error("invalid loss weights: {0}")]
    InvalidWeights(String),

    #[error("invalid layer sizes {0:?}")]
    InvalidLayerSizes(Vec<usize>),

    #[error("input size {found} does not match model input size {expected}")]
    InputSizeMismatch { expected: usize, found: usize },

    #[error("non-finite {what}")]
    NonFinite { what: String },

    #[error("segment ({start}, {end}) out of range for length {len}")]
    SegmentOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("labels required but series `{0}` has none")]
    NoLabels(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid generator config: {0}")]
    InvalidGenerator(String),

    #[error("anomaly spec #{index} ({start}..{end}) invalid: {reason}")]
    InvalidAnomaly {
        index: usize,
        start: usize,
        end: usize,
        reason: String,
    },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
