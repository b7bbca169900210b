use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singular matrix (condition estimate {condition:.3e}){}", layer_suffix(*.layer))]
    Singular { condition: f64, layer: Option<usize> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("insufficient pool: requested {requested} from {available} candidates")]
    InsufficientPool { requested: usize, available: usize },

    #[error("invalid pair: {0}")]
    InvalidPair(String),

    #[error("label mismatch: {0}")]
    LabelMismatch(String),

    #[error("phase error: {0}")]
    Phase(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn layer_suffix(layer: Option<usize>) -> String {
    match layer {
        Some(l) => format!(" at layer {l}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn parse(offset: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }
}
