//! Error type shared by every module, with a stable mapping to process
//! exit codes for the CLI (1 usage, 2 numerical, 3 I/O).

use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Vector or matrix dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Step indices passed in the wrong order (requires j < k).
    #[error("index order: {0}")]
    IndexOrder(String),

    /// The integrator produced a non-finite state.
    #[error("divergence at step {step}{}: {detail}", context_suffix(.context))]
    Divergence {
        step: usize,
        context: Option<String>,
        detail: String,
    },

    /// A series or expansion could not reach the requested accuracy.
    #[error("precision: {0}")]
    Precision(String),

    /// Malformed on-disk data (IDX files, checkpoints, CSV datasets).
    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },

    /// Configuration file or flag rejected, with the offending field path.
    #[error("config: {0}")]
    Config(String),

    /// Operations called out of order (e.g. backward without forward state).
    #[error("sequencing: {0}")]
    Sequencing(String),

    /// Underlying file-system failure.
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn context_suffix(context: &Option<String>) -> String {
    match context {
        Some(c) => format!(" ({c})"),
        None => String::new(),
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code the CLI maps this error to:
    /// 1 usage/config, 2 numerical failure, 3 I/O or data format.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_)
            | Error::DimensionMismatch(_)
            | Error::IndexOrder(_)
            | Error::Config(_)
            | Error::Sequencing(_) => 1,
            Error::Divergence { .. } | Error::Precision(_) => 2,
            Error::Format { .. } | Error::Io { .. } => 3,
        }
    }

    /// Machine-parseable category name used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::IndexOrder(_) => "index_order",
            Error::Divergence { .. } => "divergence",
            Error::Precision(_) => "precision",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::Sequencing(_) => "sequencing",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
