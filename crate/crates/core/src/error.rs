use thiserror::Error;

/// Errors raised while validating input data or evaluating an estimator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("panel has no individuals")]
    EmptyPanel,

    #[error("individual {id}: {reason}")]
    InvalidIndividual { id: String, reason: String },

    #[error("series too short: individuals {ids:?} have fewer than {min} periods")]
    SeriesTooShort { ids: Vec<String>, min: usize },

    #[error("individual {id}: interior gap between time {before} and {after}")]
    InteriorGap { id: String, before: i64, after: i64 },

    #[error("inconsistent regressor count: expected {expected}, found {found} for {id}")]
    RegressorCount {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("univariate panel required, got {0} regressors")]
    NotUnivariate(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("degenerate regressor: {0}")]
    DegenerateRegressor(&'static str),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("singular restriction covariance")]
    SingularRestriction,

    #[error("correction exceeds sum of squares (radicand {radicand:.6e})")]
    CorrectionExceedsSumOfSquares { radicand: f64 },

    #[error(
        "variance estimate negative: {total:.6e} = {ols_term:.6e} + {lambda_term:.6e} - {bias_term:.6e}"
    )]
    NegativeVariance {
        total: f64,
        ols_term: f64,
        lambda_term: f64,
        bias_term: f64,
    },

    #[error("csv: {0}")]
    Csv(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Whether the error comes from the data or configuration (as opposed to
    /// a numerical failure inside an estimator).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::EmptyPanel
                | Error::InvalidIndividual { .. }
                | Error::SeriesTooShort { .. }
                | Error::InteriorGap { .. }
                | Error::RegressorCount { .. }
                | Error::NotUnivariate(_)
                | Error::InvalidConfig(_)
                | Error::InvalidCovariance(_)
                | Error::Csv(_)
                | Error::Io(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
