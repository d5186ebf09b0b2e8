use thiserror::Error;

/// Errors raised by the solvers and the calibration pipeline.
#[derive(Debug, Error)]
pub enum KecError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("basis order {order} unsupported for {law}: {reason}")]
    BasisOrder {
        order: usize,
        law: String,
        reason: String,
    },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("linear solver breakdown: {0}")]
    SolverBreakdown(String),
    #[error("positivity violation in epidemic step at t = {t}: min reconstructed value {min}")]
    PositivityViolation { t: f64, min: f64 },
    #[error("NaN detected at t = {0}")]
    NanDetected(f64),
    #[error("data error: {0}")]
    Data(String),
    #[error("optimizer did not converge: {0}")]
    NonConverged(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KecError>;
