use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the estimator and its numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("eigen-solver exceeded its iteration budget of {budget} at index {index}")]
    ConvergenceFailure { index: usize, budget: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("invalid index set: {0}")]
    InvalidIndexSet(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("response is constant; slicing is impossible")]
    DegenerateResponse,

    #[error("slice {slice} has {size} observations; at least 2 are required")]
    SliceTooSmall { slice: usize, size: usize },

    #[error("degenerate projection: {0}")]
    Degenerate(String),

    #[error("every projection group was degenerate")]
    AllGroupsDegenerate,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("the sparsity grid is empty")]
    EmptyGrid,

    #[error("Gram matrix is numerically singular (condition number {condition:e})")]
    SingularGram { condition: f64 },

    #[error("columns are not orthonormal (deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },
}

impl Error {
    /// True for failures caused by numerical degeneracy rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::ConvergenceFailure { .. }
                | Error::DegenerateResponse
                | Error::Degenerate(_)
                | Error::AllGroupsDegenerate
                | Error::SingularGram { .. }
        )
    }
}
