use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),

    #[error("KS distance {ks:.6} exceeds threshold {threshold}")]
    KsExceeded { ks: f64, threshold: f64 },

    #[error("computation failed: {0}")]
    Compute(#[from] raftsplit_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io(_) => 1,
            CliError::KsExceeded { .. } => 2,
            CliError::Compute(_) => 3,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}
