use thiserror::Error;

/// Errors raised by field operations, kernels, solvers and the experiment runner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("field contains non-finite samples ({context})")]
    NonFinite { context: String },

    #[error("grid too small: {axis} has {n} samples, need at least 4")]
    GridTooSmall { axis: char, n: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("operation requires a {expected} grid, got {got}")]
    WrongDomain { expected: &'static str, got: String },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error(
        "Poisson problem not solvable: mean of right-hand side {mean:e} exceeds tolerance {tol:e}"
    )]
    NotSolvable { mean: f64, tol: f64 },

    #[error("vorticity not compactly supported in the truncation box: boundary max {boundary:e} > {tol:e}")]
    SupportViolation { boundary: f64, tol: f64 },

    #[error("bad parameter: {0}")]
    BadParam(String),

    #[error("point {point:?} lies outside the domain")]
    OutOfDomain { point: [f64; 3] },

    #[error("singularity of the vorticity family lies inside the domain")]
    SingularityInDomain,

    #[error("insufficient history: need {needed} snapshots, have {have}")]
    InsufficientHistory { needed: usize, have: usize },

    #[error("mollifier support does not fit inside the interior margin")]
    MarginViolation,

    #[error("CFL number {cfl:.4} exceeds twice the advisory threshold {cfl_max}")]
    CflExceeded { cfl: f64, cfl_max: f64 },

    #[error("numerical abort at t = {t}: {reason}")]
    NumericalAbort { t: f64, reason: String },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
