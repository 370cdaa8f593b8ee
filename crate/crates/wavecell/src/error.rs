//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A weight matrix or bias has the wrong shape. The classifier head is
    /// reported as layer index `num_layers`.
    #[error("shape mismatch at layer {layer}: expected {expected_rows}x{expected_cols}, got {actual_rows}x{actual_cols}")]
    ShapeMismatch {
        layer: usize,
        expected_rows: usize,
        expected_cols: usize,
        actual_rows: usize,
        actual_cols: usize,
    },

    #[error("non-finite weight at {location}")]
    NonFiniteWeight { location: String },

    #[error("arena is already in use by another inference")]
    Busy,

    #[error("arena does not match: {0}")]
    ArenaMismatch(String),

    #[error("out of memory allocating arena buffers")]
    OutOfMemory,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad magic: not a model file")]
    BadMagic,

    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),

    #[error("model file truncated")]
    TruncatedFile,

    #[error("line {line}: expected {expected} fields, got {actual}")]
    FieldCountMismatch {
        line: usize,
        expected: usize,
        actual: usize,
    },

    #[error("line {line}: cannot parse '{field}' as a number")]
    BadField { line: usize, field: String },

    #[error("line {line}: label {label} out of range 1..={classes}")]
    LabelOutOfRange {
        line: usize,
        label: i64,
        classes: usize,
    },

    #[error("samples file has {samples} lines but labels file has {labels}")]
    SampleCountMismatch { samples: usize, labels: usize },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("suite file error: {0}")]
    SuiteFile(String),
}
