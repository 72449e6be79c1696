//! Error type shared by every module in the crate.
//!
//! Variants are grouped by who is at fault: `Config` means the caller
//! passed parameters that can never work, `Data` means the dataset or
//! file content violates an invariant, `Schema` means a model file does
//! not match the expected layout, and `Numeric` means a computation
//! failed to produce a usable value (non-finite loss, solver that will
//! not bracket, ...). The CLI maps these groups onto distinct exit
//! codes, so keep new errors in the right bucket.

use std::io;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Underlying I/O failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    /// Dataset or file content violates an invariant (bad magic, row
    /// width mismatch, non-finite value, label out of range, ...).
    #[error("{0}")]
    Data(String),

    /// Caller-supplied parameters are invalid (zero bins, negative
    /// alpha, validation split larger than the dataset, ...).
    #[error("{0}")]
    Config(String),

    /// A serialized model does not match the expected schema.
    #[error("{0}")]
    Schema(String),

    /// A computation produced no usable value: non-finite loss, a
    /// solver that cannot bracket its root, an infeasible target.
    #[error("{0}")]
    Numeric(String),
}

impl Error {
    /// Attach a path to a raw I/O error.
    pub fn io(path: &std::path::Path, source: io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
