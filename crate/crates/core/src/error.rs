use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Violated precondition of a pure operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A file that does not satisfy its format or the invariants of the type it encodes.
    #[error("{}: record {record}, field `{field}`: {message}", file.display())]
    Format {
        file: PathBuf,
        record: String,
        field: String,
        message: String,
    },

    #[error("backend error: {0}")]
    Backend(String),

    /// The backend answered, but not with something we can parse.
    #[error("protocol error: {message} (body: {excerpt})")]
    Protocol { message: String, excerpt: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn format(
        file: impl Into<PathBuf>,
        record: impl ToString,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Format {
            file: file.into(),
            record: record.to_string(),
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
