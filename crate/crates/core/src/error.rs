use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("wrong model variant: {0}")]
    WrongVariant(String),

    /// A quadrature that did not reach its tolerance within the node budget.
    /// The best estimate is kept so callers can decide to flag rather than abort.
    #[error("{context}: quadrature did not converge (estimate {estimate:e}, error bound {error_bound:e})")]
    Accuracy {
        context: String,
        estimate: f64,
        error_bound: f64,
    },

    #[error("non-stationary AR polynomial: {0}")]
    Stationarity(String),

    #[error("work budget exceeded: {0}")]
    Resource(String),

    #[error("invalid model: {0}")]
    ModelInvalid(String),

    #[error("unsupported mean mode: {0}")]
    UnsupportedMode(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate variance estimate {v_hat_sq:e}; the limit requires v > 0")]
    DegenerateVariance { v_hat_sq: f64 },

    #[error("outside the Gaussian regime: {0}")]
    OutOfRegime(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn accuracy(context: impl Into<String>, estimate: f64, error_bound: f64) -> Self {
        Error::Accuracy {
            context: context.into(),
            estimate,
            error_bound,
        }
    }

    /// Re-labels an accuracy failure with the name of the calling operation.
    pub(crate) fn in_context(self, context: &str) -> Self {
        match self {
            Error::Accuracy {
                estimate,
                error_bound,
                ..
            } => Error::accuracy(context, estimate, error_bound),
            other => other,
        }
    }
}
