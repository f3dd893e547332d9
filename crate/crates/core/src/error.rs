use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite entry in input")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("linearly dependent input to Gram-Schmidt (vector {index})")]
    DegenerateInput { index: usize },
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("Jacobi eigensolver did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("matrix is not symmetric positive definite")]
    NotSpd,
    #[error("curvature estimate must be positive, got {0}")]
    NonPositiveCurvature(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("affine map is singular")]
    SingularMap,
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("empty rate window")]
    EmptyWindow,
    #[error("unknown trace column `{0}`")]
    UnknownColumn(String),
}
