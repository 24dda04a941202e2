use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Execute or cancel referencing an order that is not resting.
    #[error("unknown order id {0:?}")]
    UnknownOrderId(String),

    #[error("book crossed at t={timestamp}us seq={seq}: bid {bid} >= ask {ask}")]
    CrossedBookAfterEvent {
        timestamp: i64,
        seq: u64,
        bid: i64,
        ask: i64,
    },

    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("line {line}: timestamp {found}us precedes {previous}us")]
    NonMonotoneTimestamp {
        line: usize,
        previous: i64,
        found: i64,
    },

    #[error("missing or unexpected header line, expected {expected:?}")]
    MissingHeader { expected: &'static str },

    #[error("infeasible synthetic config: {0}")]
    InfeasibleConfig(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cannot compute a threshold from an empty sample")]
    EmptySample,

    #[error("no deviation episodes")]
    NoEpisodes,

    #[error("too few rows: have {rows}, need at least {required}")]
    TooFewRows { rows: usize, required: usize },

    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),

    #[error("duration must be positive, got {0}")]
    NonPositiveT(f64),

    #[error("standard errors are unavailable")]
    MissingStdErrors,

    #[error("adjusted R^2 undefined for n={n}, k={k}")]
    DegenerateDof { n: usize, k: usize },

    #[error("{p} covariates exceeds the search limit of {limit}")]
    TooManyCovariates { p: usize, limit: usize },

    #[error("design matrix is singular")]
    SingularDesign,

    #[error("invalid survival data: {0}")]
    InvalidData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
