use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cloud is flagged diverged; measure functionals are undefined")]
    DivergedCloud,

    #[error("implicit solve failed for particle {particle}: residual {residual:e} after {iterations} iterations")]
    ImplicitSolveFailure {
        particle: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("model `{model}` does not declare constants needed by {assumption}: {missing}")]
    MissingConstants {
        model: String,
        assumption: String,
        missing: String,
    },

    #[error("no nonnegative constants satisfy {0} on the sampled set")]
    Infeasible(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
