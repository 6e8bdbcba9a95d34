//! Error type shared by all modules of the crate.

use crate::objective::Subset;

/// Errors reported by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A matrix that must be positive definite is not (smallest eigenvalue
    /// at or below the `pd_floor` threshold).
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// A design (subset or weight vector) whose Gram matrix is singular.
    #[error("infeasible design: {0}")]
    InfeasibleDesign(String),

    /// The problem instance admits no feasible solution for the solver.
    #[error("infeasible problem: {0}")]
    InfeasibleProblem(String),

    /// Rounding cannot produce a size-k subset from the given weights.
    #[error("cannot round weights: {0}")]
    CannotRound(String),

    /// Greedy removal reached a state where every single-element removal is
    /// infeasible. The partial set at that point is retained for inspection.
    #[error("greedy removal stuck at size {}: no feasible removal", partial.len())]
    StuckInfeasible {
        /// Set held when the algorithm got stuck (size still above budget).
        partial: Subset,
    },

    /// An enumeration oracle was asked to exceed its budget.
    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),

    /// An iterative routine failed to reach its target residual.
    #[error("numeric failure: {msg} (residual {residual:.3e})")]
    NumericFailure {
        msg: String,
        /// Best residual reached before giving up.
        residual: f64,
    },

    /// CSV ingestion failed; `row` and `column` locate the offending cell
    /// (1-based data rows, 0-based columns) when known.
    #[error("csv error at row {row:?}, column {column:?}: {msg}")]
    Csv {
        row: Option<usize>,
        column: Option<usize>,
        msg: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
