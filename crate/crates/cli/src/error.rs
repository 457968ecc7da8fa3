use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    /// An upstream stage has not produced its artifact.
    #[error("missing artifact {path}: run `audrop {stage}` first")]
    Missing { path: String, stage: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Failed(_) => 1,
            CliError::Missing { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn missing(path: &std::path::Path, stage: &str) -> Self {
        CliError::Missing { path: path.display().to_string(), stage: stage.to_string() }
    }
}

impl From<audrop_core::Error> for CliError {
    fn from(e: audrop_core::Error) -> Self {
        use audrop_core::Error as E;
        match e {
            E::Divergence { .. } | E::AllZero => CliError::Numerical(e.to_string()),
            E::InvalidParameter(_) | E::UnknownSymbol(_) => CliError::Usage(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(format!("io: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Failed(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Failed(format!("json: {e}"))
    }
}
