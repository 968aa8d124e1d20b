use alloc::string::String;
use alloc::vec::Vec;

use crate::weights::FormatError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Tensor extents do not fit the operation.
    #[error("{op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// Model or run configuration violates an invariant.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The weight store does not match what the model expects.
    #[error(
        "weight binding failed: {} missing, {} extra, {} mismatched (missing: [{}]; extra: [{}]; mismatched: [{}])",
        missing.len(), extra.len(), mismatched.len(),
        missing.join(", "), extra.join(", "), mismatched.join(", ")
    )]
    Binding {
        missing: Vec<String>,
        extra: Vec<String>,
        mismatched: Vec<String>,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    /// Caller supplied data outside the operation's domain.
    #[error("invalid input: {0}")]
    Input(String),

    #[error(transparent)]
    Format(#[from] FormatError),
}

pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape {
        op,
        detail: detail.into(),
    }
}
