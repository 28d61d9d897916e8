use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] rrnet::Error),

    #[error("{0}")]
    Usage(String),

    #[error("unknown configuration key `{key}` (line {line})")]
    UnknownKey { key: String, line: usize },

    #[error("configuration line {line}: {message}")]
    ConfigLine { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
