use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bandwidth (h1 = {h1}, h2 = {h2}): {reason}")]
    InvalidBandwidth { h1: f64, h2: f64, reason: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("non-finite weighted moment (linear predictor {eta} exceeds the overflow clamp)")]
    NonFiniteMoment { eta: f64 },

    #[error("no local data: risk-set denominator vanishes at t = {t}")]
    SparseRegion { t: f64 },

    #[error("solver did not converge at s = {s} after {iterations} iterations (residual {residual:e})")]
    NoConvergence { s: f64, iterations: usize, residual: f64 },

    #[error("insufficient data at s = {s}: {effective} effective events, {required} required")]
    InsufficientData { s: f64, effective: usize, required: usize },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("every grid point failed to converge")]
    AllPointsFailed,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate bandwidth grid: {0}")]
    DegenerateGrid(String),

    #[error("split-half fit failed: {0}")]
    SplitFailure(String),

    #[error("bandwidth selection failed: {0}")]
    SelectionFailure(String),

    #[error("censoring target {target} unattainable (attainable range [{min}, {max}])")]
    CalibrationFailure { target: f64, min: f64, max: f64 },

    #[error("study invalid: {failures} of {replications} replications failed (first: {first})")]
    StudyInvalid {
        failures: usize,
        replications: usize,
        first: String,
    },

    #[error("ingest error in {file}, row {row}, column '{column}': {message}")]
    Ingest {
        file: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code, used in the CLI error JSON and the C API.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidBandwidth { .. } => "invalid_bandwidth",
            Error::InvalidData(_) => "invalid_data",
            Error::NonFiniteMoment { .. } => "nonfinite_moment",
            Error::SparseRegion { .. } => "sparse_region",
            Error::NoConvergence { .. } => "no_convergence",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::SingularSystem(_) => "singular_system",
            Error::AllPointsFailed => "all_points_failed",
            Error::Config(_) => "config",
            Error::DegenerateGrid(_) => "degenerate_grid",
            Error::SplitFailure(_) => "split_failure",
            Error::SelectionFailure(_) => "selection_failure",
            Error::CalibrationFailure { .. } => "calibration_failure",
            Error::StudyInvalid { .. } => "study_invalid",
            Error::Ingest { .. } => "ingest",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
