use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An operation received operands whose shapes it cannot combine.
    #[error("{op}: incompatible shapes {shapes:?} ({detail})")]
    Shape {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
        detail: String,
    },

    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("variable {0} does not belong to this tape")]
    UnknownVar(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value produced at ponder step {step}")]
    NonFiniteActivation { step: usize },

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss at optimizer step {0}")]
    NonFiniteLoss(u64),

    #[error("halting threshold not reached before the lambda stream was exhausted")]
    HorizonNotReached,

    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, shapes: &[&[usize]], detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            shapes: shapes.iter().map(|s| s.to_vec()).collect(),
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
