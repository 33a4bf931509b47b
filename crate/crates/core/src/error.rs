use thiserror::Error;

/// Errors produced by the estimation routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    /// The (weighted) design or Jacobian is rank deficient. `columns` are the
    /// column indices that the pivoted QR could not separate from the rest.
    #[error("singular system: rank deficient in columns {columns:?}")]
    Singular { columns: Vec<usize> },

    /// An iterative solver stopped without meeting its tolerance. `last`
    /// carries the final iterate.
    #[error("no convergence after {iterations} iterations: {reason}")]
    NonConvergence {
        iterations: usize,
        reason: String,
        last: Vec<f64>,
    },

    /// The reweighting outer loop did not settle. `trace` holds the blip
    /// iterates, one entry per outer iteration.
    #[error("outer reweighting loop did not converge after {iterations} iterations")]
    OuterNonConvergence {
        iterations: usize,
        trace: Vec<Vec<f64>>,
    },

    #[error("numeric domain error: {0}")]
    Domain(String),

    #[error("estimation error: {0}")]
    Estimation(String),
}

impl Error {
    /// True for the solver failure modes (as opposed to bad input).
    pub fn is_convergence_failure(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::OuterNonConvergence { .. } | Error::Singular { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
