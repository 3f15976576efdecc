use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid nucleotide {byte:?} (0x{byte:02x}) at offset {offset}")]
    InvalidSymbol { byte: u8, offset: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("segmentation error: N-run of length {len} at offset {offset} cannot be covered by the priority list")]
    Segmentation { offset: usize, len: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("constraint violation: {0}")]
    Constraint(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("unsupported task: {0}")]
    UnsupportedTask(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    ///
    /// 1 is reserved for usage errors, 2 for bad data and 3 for constraint
    /// violations.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Constraint(_) => 3,
            _ => 2,
        }
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSymbol { .. } => "invalid_symbol",
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::Segmentation { .. } => "segmentation",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Degenerate(_) => "degenerate",
            Error::Constraint(_) => "constraint",
            Error::Resource(_) => "resource",
            Error::UnsupportedTask(_) => "unsupported_task",
            Error::Parse { .. } => "parse",
            Error::Input(_) => "input",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
