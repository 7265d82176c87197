use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum MseError {
    #[error("cell {cell} has negative count {value}")]
    NegativeCount { cell: &'static str, value: i64 },

    #[error("table is empty: no individual observed in any list")]
    EmptyTable,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown dataset '{0}' (expected one of als_all, als_deployed, als_nondeployed, wtc)")]
    UnknownDataset(String),

    #[error("invalid probability {0}")]
    InvalidProbability(f64),

    #[error("invalid shape parameter {0}")]
    InvalidShape(f64),

    #[error("log-gamma requires a positive argument, got {0}")]
    NonPositiveArgument(f64),

    #[error("design matrix is singular")]
    SingularDesign,

    #[error("list margin n{list} is zero")]
    ZeroMargin { list: usize },

    #[error("parameter outside its domain: {0}")]
    Domain(String),

    #[error("optimizer did not converge: {0}")]
    NonConvergence(String),

    #[error("M-step objective is degenerate: {0}")]
    DegenerateObjective(String),

    #[error("quadrature grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("estimate at or below the observed count; interval undefined")]
    BoundaryEstimate,

    #[error("{failed} of {total} bootstrap replicates failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("zero denominator")]
    ZeroDenominator,

    #[error("invalid population spec: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MseError>;

impl From<serde_json::Error> for MseError {
    fn from(e: serde_json::Error) -> Self {
        MseError::Parse(e.to_string())
    }
}

impl From<csv::Error> for MseError {
    fn from(e: csv::Error) -> Self {
        MseError::Parse(e.to_string())
    }
}
