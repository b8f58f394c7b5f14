use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Non-convergence of iterative solvers is not an error; it is reported in
/// the solver's report value.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("resolution too small on axis {axis}: {got} < {need}")]
    ResolutionTooSmall { axis: usize, got: usize, need: usize },

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },

    #[error("point outside the admissible domain: {0}")]
    OutOfDomain(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("boundary condition violated: max distance {max_distance:.3e} exceeds {tolerance:.3e}")]
    BoundaryCondition { max_distance: f64, tolerance: f64 },

    #[error("structure field is not a complex structure: |J^2 + I| = {norm:.3e} at node {node}")]
    NotComplexStructure { node: usize, norm: f64 },

    #[error("subspace is not totally real: {0}")]
    NotTotallyReal(String),

    #[error("{0}")]
    Inconsistent(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
