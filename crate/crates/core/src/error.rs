use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step size condition violated: 2*alpha - p*kappa_g^2*sigma = {0} <= 0")]
    StepCondition(f64),

    #[error("oracle returned a non-finite value at iteration {iteration}: {what}")]
    NonFinite { iteration: usize, what: &'static str },

    #[error("instance generation failed after {0} attempts")]
    GenerationFailed(usize),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed trace {path}: {msg}")]
    Trace { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
