use alloc::string::String;

/// Errors raised by the graph, solver and training routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate distance between points {0} and {1}")]
    DegenerateDistance(usize, usize),

    #[error("graph has no edges")]
    NoEdges,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no convergence after {iterations} iterations (relative residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("divergence at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("condition check undefined: {0}")]
    UndefinedCheck(String),

    #[error("training failed at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
