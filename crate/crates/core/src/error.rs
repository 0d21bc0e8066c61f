//! Crate-wide error type and exit-code mapping for the CLI.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimension disagreement between operands; always a caller bug.
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("feature file format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// No valid Dirichlet split found within the retry budget.
    #[error("partition infeasible: {0}")]
    PartitionInfeasible(String),

    /// NaN/Inf detected in model state or a loss value.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A client shard is empty; the harness treats this as a skip signal.
    #[error("empty shard: client contributes no update this round")]
    EmptyShard,

    /// No class shared by at least two clients; feature bias is undefined.
    #[error("undefined metric: no class shared by at least two clients")]
    NoSharedClass,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 partition infeasible,
    /// 4 numerical failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) | Error::LabelOutOfRange { .. } => 2,
            Error::PartitionInfeasible(_) => 3,
            Error::Numerical(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
