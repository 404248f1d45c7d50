//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by graph machinery, model synthesis, the recovery pipeline
/// and the experiment harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NomadError {
    #[error("graph is not connected")]
    Disconnected,
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),
    #[error("vertex {0} is not in the graph")]
    UnknownVertex(usize),
    #[error("vertex ids must be exactly 1..={0}")]
    NonDenseLabels(usize),
    #[error("vertex sets overlap: {0}")]
    Overlap(String),
    #[error("triple must contain three distinct vertices")]
    NonDistinctTriple,
    #[error("input of size {size} exceeds the exhaustive-search budget of {limit}")]
    BudgetExceeded { size: usize, limit: usize },
    #[error("{0:?} is not a remote leaf set")]
    NotRemote(Vec<usize>),
    #[error("vertex label universes differ")]
    LabelMismatch,
    #[error("invalid articulated set tree: {0}")]
    InvalidAst(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("noise entry {index} is negative ({value})")]
    NegativeNoise { index: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("zero empirical variance in column {0}")]
    ZeroVariance(usize),
    #[error("model synthesis failed after {attempts} attempts: {margin} margin {value} below floor {floor}")]
    MarginRejected {
        attempts: usize,
        margin: &'static str,
        value: f64,
        floor: f64,
    },
    #[error("invalid block: {0}")]
    InvalidBlock(String),
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error("pipeline stage `{stage}` failed: {message}")]
    Pipeline { stage: &'static str, message: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for NomadError {
    fn from(e: std::io::Error) -> Self {
        NomadError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for NomadError {
    fn from(e: serde_json::Error) -> Self {
        NomadError::Parse(e.to_string())
    }
}

impl From<csv::Error> for NomadError {
    fn from(e: csv::Error) -> Self {
        NomadError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, NomadError>;
