use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the graph, signal, dynamics and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid adjacency matrix: {0}")]
    InvalidAdjacency(String),

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("graph is not balanced: |in - out| = {gap:e} at agent {agent} exceeds tolerance {tol:e}")]
    UnbalancedGraph { agent: usize, gap: f64, tol: f64 },

    #[error("clamped signal ends at {signal_end} but [0, {required}] is required")]
    HorizonUncovered { signal_end: f64, required: f64 },

    #[error("non-finite state at t = {time}")]
    NonFiniteState { time: f64 },

    #[error("configuration has zero diameter")]
    DegenerateDiameter,

    #[error("pair ({i}, {j}) does not attain the diameter")]
    InvalidPair { i: usize, j: usize },

    #[error("trajectory span {span} is shorter than window {tau}")]
    SpanTooShort { span: f64, tau: f64 },

    #[error("no window [t, t + {tau}] has both endpoints on the sample grid")]
    UnalignedWindows { tau: f64 },

    #[error("value at index {index} is not positive: {value}")]
    NonPositiveValue { index: usize, value: f64 },

    #[error("config error at {field}: {message}")]
    Config { field: String, message: String },

    #[error("failed to parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
