use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("unsupported spatial dimension {0} (expected 2 or 3)")]
    UnsupportedDimension(usize),
    #[error("invalid mode index {0:?}")]
    InvalidModeIndex(Vec<usize>),
    #[error("requested {0} modes; at least one is required")]
    EmptyBasis(usize),
    #[error("beam root {index} did not converge within {iterations} iterations")]
    RootNotConverged { index: usize, iterations: usize },
    #[error("quadrature order {order} too low: {what} deviates by {deviation:e}")]
    InsufficientQuadrature {
        order: usize,
        what: &'static str,
        deviation: f64,
    },
    #[error("plate bending matrix is not positive definite")]
    BendingNotPositiveDefinite,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("wave exponent p = {0} must be finite and >= 1")]
    WaveExponent(f64),
    #[error("plate exponent q = {0} must be finite and >= 1")]
    PlateExponent(f64),
    #[error("source parameter {name} = {value} is not finite")]
    NotFinite { name: &'static str, value: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("final time must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("sample stride must be at least 1")]
    InvalidStride,
    #[error("state dimensions do not match the operators: {0}")]
    DimensionMismatch(String),
    #[error(
        "implicit midpoint iteration did not reach tol {tol:e} within {max_iter} iterations at t = {t} (last update {last_update:e}); time step too large"
    )]
    MidpointDiverged {
        t: f64,
        tol: f64,
        max_iter: usize,
        last_update: f64,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("trajectory needs at least {needed} samples, has {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("trajectories are sampled on different time grids")]
    GridMismatch,
    #[error("test index {index} outside evaluation basis of size {size}")]
    TestIndexOutOfRange { index: usize, size: usize },
    #[error("evaluation basis ({eval}) is smaller than the simulating basis ({sim})")]
    BasisTooSmall { sim: usize, eval: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
