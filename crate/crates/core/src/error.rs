use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible-solution: {0}")]
    InfeasibleSolution(String),

    #[error("degenerate-action: positions ({0}, {0}) coincide")]
    DegenerateAction(usize),

    #[error("action ({i}, {j}) out of range for sequence length {len}")]
    ActionOutOfRange { i: usize, j: usize, len: usize },

    #[error("no-feasible-action: every pair is masked out")]
    NoFeasibleAction,

    #[error("action ({i}, {j}) is masked out")]
    MaskedAction { i: usize, j: usize },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported edge weight type `{0}` (only EUC_2D is accepted)")]
    UnsupportedEdgeWeight(String),

    #[error("unsupported problem type `{0}`")]
    UnsupportedProblemType(String),

    #[error("instance too large for the exact solver: {n} nodes (max {max})")]
    TooLarge { n: usize, max: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value during training: {0}")]
    NonFinite(String),

    #[error("empty test set")]
    EmptyTestSet,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("results file error: {0}")]
    Csv(#[from] csv::Error),

    #[error("instance cache error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}
