//! File formats, dataset IO, benchmarks and the `mmvt` command line for the
//! RGB-T tracker in [`mmvt_core`].
//!
//! * [`store`]: `.mmvt` weight files.
//! * [`dataset`]: sequence folders (`visible/`, `infrared/`, ground-truth text).
//! * [`frames`]: image files ↔ `[1, 3, H, W]` tensors in `[0, 1]`.
//! * [`results`]: per-sequence `x,y,w,h` result files.
//! * [`report`]: metric reports as JSON and CSV curves.
//! * [`fixture`]: synthetic sequences written in the dataset layout.
//! * [`run`]: tracking whole sequences.
//! * [`bench`]: separable vs softmax attention timings.
//! * [`selfcheck`]: oracle suites runnable from the command line.
//! * [`cli`]: argument parsing and commands.

pub mod bench;
pub mod cli;
pub mod dataset;
pub mod fixture;
pub mod frames;
pub mod report;
pub mod results;
pub mod run;
pub mod selfcheck;
pub mod store;

use std::path::PathBuf;

/// Errors from reading or writing files.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: mmvt_core::weights::FormatError,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    /// File content does not follow the expected layout.
    #[error("{path}: {detail}")]
    Invalid { path: PathBuf, detail: String },
}

impl IoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        IoError::Invalid {
            path: path.into(),
            detail: detail.into(),
        }
    }

    pub fn path(&self) -> &std::path::Path {
        match self {
            IoError::Io { path, .. }
            | IoError::Format { path, .. }
            | IoError::Image { path, .. }
            | IoError::Invalid { path, .. } => path,
        }
    }
}
