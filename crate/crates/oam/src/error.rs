use std::path::PathBuf;

/// Everything the command-line tool can fail with. Each variant maps to a
/// process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("dataset not found: {0}")]
    DatasetNotFound(PathBuf),
    #[error("numeric divergence: {0}")]
    Divergence(String),
    #[error("checkpoint corrupted: {0}")]
    Checkpoint(String),
    #[error("gradient check failed for {0}")]
    GradCheck(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Format { .. } | CliError::DatasetNotFound(_) | CliError::Io { .. } => 3,
            CliError::Divergence(_) => 4,
            CliError::Checkpoint(_) => 5,
            CliError::GradCheck(_) => 1,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<oad_core::Error> for CliError {
    fn from(e: oad_core::Error) -> Self {
        use oad_core::Error as E;
        match e {
            E::Config(m) => CliError::Config(m),
            E::Divergence(m) => CliError::Divergence(m),
            E::Data(m) | E::Evaluation(m) => CliError::Data(m),
            other => CliError::Data(other.to_string()),
        }
    }
}
