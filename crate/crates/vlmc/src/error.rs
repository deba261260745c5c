use std::path::PathBuf;

/// Errors surfaced by the CLI and the experiment runner.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Model(#[from] vlmc_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: duplicate output path; give one of the experiments a distinct `output`")]
    DuplicateOutput { path: PathBuf },
    #[error("{0}")]
    Refused(String),
    #[error("{path}: malformed file: {message}")]
    Format { path: PathBuf, message: String },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}
