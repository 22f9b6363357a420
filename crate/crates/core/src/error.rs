use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised while estimating or testing causal effects.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// A conditioning block was numerically singular.
    #[error("singular conditioning set {set:?} (pivot {pivot:.3e})")]
    Conditioning { set: Vec<usize>, pivot: f64 },

    #[error("numerical degeneracy: {0}")]
    Numerical(String),

    /// The constrained optimizer did not converge; `best_loglik` is the
    /// log-likelihood of the best feasible point found.
    #[error("solver did not converge after {iterations} iterations (best loglik {best_loglik})")]
    Solver { best_loglik: f64, iterations: usize },

    #[error("scan exceeded {max_steps} steps towards {direction} from {start}")]
    ScanOverflow {
        direction: ScanDirection,
        start: f64,
        max_steps: usize,
    },

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: String,
        row: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanDirection {
    Left,
    Right,
}

impl std::fmt::Display for ScanDirection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScanDirection::Left => f.write_str("-inf"),
            ScanDirection::Right => f.write_str("+inf"),
        }
    }
}
