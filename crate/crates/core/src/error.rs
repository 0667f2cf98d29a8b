use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {re} + {im}i is not in the open upper half plane")]
    NotInUpperHalfPlane { re: f64, im: f64 },

    #[error("fixed-point solver did not converge at z = {re} + {im}i (last residual {residual:e})")]
    NoConvergence { re: f64, im: f64, residual: f64 },

    #[error("grid does not cover the support: pdf at x = {x} is {pdf:e}")]
    GridTooShort { x: f64, pdf: f64 },

    #[error("invalid covariance spec: {0}")]
    InvalidCovariance(String),

    #[error("matrix is not positive semi-definite (eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("size cap exceeded: {size} > {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("empty sample")]
    EmptySample,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
