use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Command failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] ftl_core::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),
    #[error("audit failed: {0}")]
    AuditFailed(String),
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// 1 usage or configuration, 2 data, 3 numeric audit failure.
    pub fn exit_code(&self) -> i32 {
        use ftl_core::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(E::Config(_) | E::Parameter(_) | E::Domain { .. }) => 1,
            CliError::Core(_) | CliError::Io { .. } | CliError::Incompatible(_) => 2,
            CliError::AuditFailed(_) => 3,
        }
    }
}

impl From<ftl_tensor::TensorError> for CliError {
    fn from(e: ftl_tensor::TensorError) -> Self {
        CliError::Core(e.into())
    }
}
