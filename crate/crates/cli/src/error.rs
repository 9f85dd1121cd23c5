use dpplearn::DppError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Model(#[from] DppError),

    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn file(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::File {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit code: 2 for configuration and input errors, 3 for
    /// numerical failures, 4 for an unresolved bounded step.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(e) => match e {
                DppError::BoundedStepUnresolved { .. } => 4,
                DppError::NotPositiveSemiDefinite { .. }
                | DppError::Factorization(_)
                | DppError::SingularSample { .. }
                | DppError::InconsistentTruncation { .. }
                | DppError::InsufficientTruncation { .. }
                | DppError::InvalidInitialState(_) => 3,
                _ => 2,
            },
            _ => 2,
        }
    }
}
