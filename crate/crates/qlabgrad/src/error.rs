//! Crate-wide error type.

use crate::qlab::StepReport;
use thiserror::Error;

/// Which of the two pre-learning-rate search loops hit its iteration cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlrLoop {
    /// The growth loop that doubles the rate while the quadratic coefficient is negative.
    Doubling,
    /// The shrink loop that halves the rate while the probe loss exceeds the current loss.
    Halving,
}

impl std::fmt::Display for PlrLoop {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlrLoop::Doubling => write!(f, "doubling"),
            PlrLoop::Halving => write!(f, "halving"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Vector or matrix dimensions disagree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    /// The matrix handed to a quadratic oracle is not symmetric positive semidefinite.
    #[error("invalid quadratic matrix: {0}")]
    InvalidMatrix(String),

    /// Name does not match any built-in test function.
    #[error("unknown test function `{0}` (expected booth, himmelblau, or eggholder)")]
    UnknownFunction(String),

    /// Generic precondition violation on an operation argument.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Missing or out-of-range optimizer hyperparameter.
    #[error("scheme `{scheme}`: hyperparameter `{field}` {reason}")]
    Hyperparam {
        scheme: &'static str,
        field: &'static str,
        reason: String,
    },

    /// A pre-learning-rate search loop exceeded its cap; the oracle is pathological
    /// for the search (for example globally concave along the descent ray).
    #[error("pre-learning-rate {which} loop exceeded {cap} iterations (last rate {last_rate:e})")]
    PlrSearchStalled {
        which: PlrLoop,
        cap: u64,
        last_rate: f64,
    },

    /// A step failed mid-way; carries the partially filled report.
    #[error("step {step} aborted: {detail}")]
    StepAborted {
        step: u64,
        detail: String,
        partial: Box<StepReport>,
    },

    /// IDX file parse failure, with the byte offset where parsing stopped.
    #[error("IDX parse error at byte offset {offset}: {detail}")]
    Idx { offset: u64, detail: String },

    /// Image and label files disagree on the sample count.
    #[error("IDX sample count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// Experiment or suite configuration is malformed (CLI exit code 2).
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
