//! Error type shared by every module in the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two operands whose shapes cannot be combined by the named operation.
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A single tensor whose shape violates an operation's contract.
    #[error("{op}: bad shape {shape:?}: {detail}")]
    BadShape {
        op: &'static str,
        shape: Vec<usize>,
        detail: String,
    },

    /// Non-finite values where the operation requires finite input.
    #[error("{op}: input contains non-finite values")]
    NonFinite { op: &'static str },

    /// A scalar parameter outside its admissible range (tau, epsilon, ...).
    #[error("parameter {name} must be {requirement}, got {value}")]
    Parameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },

    /// Input data outside the mathematical domain of the statistic.
    #[error("domain error: {0}")]
    Domain(String),

    /// An index vector that is not a bijection.
    #[error("not a permutation: {0}")]
    Bijection(String),

    /// Violation of an API usage contract (wrong tape, stale blocks, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid model, patching, or training configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed cell in a CSV dataset.
    #[error("parse error in {path} at row {row}, column {column}: {detail}")]
    Parse {
        path: String,
        row: usize,
        column: String,
        detail: String,
    },

    /// Training aborted because the loss became non-finite.
    #[error("training diverged: loss is not finite at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
