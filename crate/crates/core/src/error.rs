use thiserror::Error;

/// Errors raised by model construction, the samplers and the estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("prior+design not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("degenerate leverage at site {site}: h = {leverage}")]
    DegenerateLeverage { site: usize, leverage: f64 },

    #[error("maximal coupling did not terminate within {0} proposals")]
    CouplingCensored(usize),

    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    #[error("grid exhausted: d-bar stays above {epsilon} up to t = {last}")]
    GridExhausted { epsilon: f64, last: usize },

    #[error("{0}")]
    Records(String),

    #[error("standardize: column {0} has zero variance")]
    ZeroVarianceColumn(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
