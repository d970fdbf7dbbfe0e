use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate geometry: UAV and BS positions coincide ({0:?})")]
    DegenerateGeometry([f64; 3]),

    #[error("path list is empty")]
    NoPaths,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("action {action} out of range for {num_actions} BS-beam pairs")]
    ActionOutOfRange { action: usize, num_actions: usize },

    #[error("objective returned a non-finite value {value} at {angle} deg")]
    NonFiniteObjective { angle: f64, value: f64 },

    #[error("beam optimization failed for link (m={m}, l={l}, n={n}): {source}")]
    Link {
        m: usize,
        l: usize,
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("infeasible assignment: {rows} UAVs but only {cols} BS-beam pairs")]
    Infeasible { rows: usize, cols: usize },

    #[error("training diverged: {0}")]
    Training(String),

    #[error("inference produced non-finite logits for head {0}")]
    Inference(usize),

    #[error("bad magic in {path}: expected {expected:?}")]
    BadMagic { path: PathBuf, expected: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: String, expected: String },

    #[error("file truncated: {0}")]
    Truncated(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
