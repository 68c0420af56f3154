use thiserror::Error;

/// Errors produced by the forward and inverse pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point ({x}, {y}) lies outside the unit disk")]
    OutOfDomain { x: f64, y: f64 },

    #[error("conductivity is not finite and positive at vertex {vertex} (value {value})")]
    NonFinite { vertex: usize, value: f64 },

    #[error("{what} is numerically singular (condition number {condition:.3e})")]
    Singular { what: &'static str, condition: f64 },

    #[error("linear solve did not converge (relative residual {residual:.3e})")]
    NotConverged { residual: f64 },

    #[error("assembled operator is asymmetric beyond tolerance (relative asymmetry {relative:.3e})")]
    Asymmetric { relative: f64 },

    #[error("Fourier order {order} exceeds the boundary resolution limit {limit}")]
    Nyquist { order: usize, limit: usize },

    #[error("ODE integration failed: {0}")]
    Integration(String),

    #[error("symmetric eigendecomposition failed")]
    Eigen,

    #[error("malformed data: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
