use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("marginal masses differ: {0} vs {1}")]
    MassMismatch(f64, f64),

    #[error("measure has total mass {0}, expected 1")]
    NotProbability(f64),

    #[error("measure has length {got}, space has {expected} points")]
    MeasureLength { expected: usize, got: usize },

    #[error("space has no interpolator")]
    MissingInterpolator,

    #[error("space is not one-dimensional: {0}")]
    NotOneDimensional(String),

    #[error("marginal has mass {mass} on zero-weight points (density undefined)")]
    SingularMarginal { mass: f64 },

    #[error("correspondence does not cover: {0}")]
    Coverage(String),

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("unknown model kind `{0}`")]
    UnknownKind(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
