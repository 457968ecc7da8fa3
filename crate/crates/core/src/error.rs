use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input too short: need at least {needed} samples, got {got}")]
    InputTooShort { needed: usize, got: usize },

    #[error("empty input")]
    Empty,

    #[error("logarithm of zero: input is all-zero")]
    AllZero,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("target needs {required} frames but only {available} are available")]
    InfeasibleTarget { required: usize, available: usize },

    #[error("character {0:?} is not in the alphabet")]
    UnknownSymbol(char),

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("need at least {needed} items, got {got}")]
    TooFew { needed: usize, got: usize },

    #[error("training data contains a single class")]
    OneClass,

    #[error("mode error: {0}")]
    Mode(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("corrupt wav header: {0}")]
    CorruptWav(String),

    #[error("unsupported wav encoding: {0}")]
    UnsupportedWav(String),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
