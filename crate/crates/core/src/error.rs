use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A record or vector does not have the expected layout.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("point {point:?} lies outside the voxel grid bounds")]
    OutOfBounds { point: [f64; 3] },

    #[error("electrodes {first} and {second} map to the same voxel {voxel:?}")]
    LayoutCollision {
        first: usize,
        second: usize,
        voxel: [usize; 3],
    },

    #[error("frame mismatch: expected {expected}, got {actual}")]
    FrameMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("shape mismatch in layer {layer}: expected {expected} values, got {actual}")]
    Shape {
        layer: String,
        expected: usize,
        actual: usize,
    },

    #[error("numerical failure: {context}")]
    Numerical { context: String },

    #[error("integration failed at step {step}: non-finite state")]
    Integration { step: usize },

    #[error("degenerate fit on axis {axis}: {reason}")]
    DegenerateFit { axis: char, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data integrity error: {0}")]
    Integrity(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Process exit code used by the command-line tool.
    ///
    /// 2 usage/config, 3 data integrity, 4 numerical failure. IO errors are
    /// reported as usage errors since they almost always stem from a bad path.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io { .. } => 2,
            Error::Json { .. } => 2,
            Error::Schema(_)
            | Error::Integrity(_)
            | Error::OutOfBounds { .. }
            | Error::LayoutCollision { .. }
            | Error::FrameMismatch { .. }
            | Error::Shape { .. } => 3,
            Error::Numerical { .. }
            | Error::Integration { .. }
            | Error::DegenerateFit { .. }
            | Error::DegenerateInput(_) => 4,
        }
    }
}
