use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("joint knockoff covariance is not PSD: most negative eigenvalue {min_eigenvalue:e}")]
    NotPsd { min_eigenvalue: f64 },

    #[error("insufficient {stratum} in pool: need {needed}, found {available} (short by {})", needed - available)]
    InsufficientStratum {
        stratum: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("selection retained no rows out of {pool}")]
    EmptySelection { pool: usize },

    #[error("invalid mixture weight: rate_case {rate_case} < rate_control {rate_control}")]
    InvalidMixtureWeight { rate_case: f64, rate_control: f64 },

    #[error("degenerate tilt: all importance weights are zero for key {0}")]
    DegenerateTilt(String),

    #[error("response has {levels} distinct values; discretize y before grouping")]
    ContinuousResponse { levels: usize },

    #[error("logistic fit needs both classes present (found only {0})")]
    SingleClass(u8),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("method `{method}` is not applicable: {reason}")]
    MethodNotApplicable { method: String, reason: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
