use std::path::PathBuf;

/// Error type shared by every stage of the pipeline.
///
/// The variants line up with the process exit codes used by the command
/// line front end (see [`Error::exit_code`]).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("numerical error in {layer}: {detail}")]
    Numerical { layer: String, detail: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn dataset(msg: impl Into<String>) -> Self {
        Error::Dataset(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn numerical(layer: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numerical {
            layer: layer.into(),
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Dataset error for a missing input, I/O error otherwise.
    pub(crate) fn missing(what: &str, path: &std::path::Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::Dataset(format!("{what} not found: {}", path.display()))
        } else {
            Error::io(path, source)
        }
    }

    /// Process exit code: 2 config/input, 3 dataset/format, 4 numerical, 1 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Input(_) => 2,
            Error::Dataset(_) | Error::Format(_) => 3,
            Error::Numerical { .. } => 4,
            Error::Io { .. } => 1,
        }
    }
}
