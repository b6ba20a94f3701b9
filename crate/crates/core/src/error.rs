use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus line {line}: malformed record: {message}")]
    Parse { line: u64, message: String },

    #[error("corpus line {line}: invalid base64 content: {source}")]
    Decode {
        line: u64,
        #[source]
        source: base64::DecodeError,
    },

    #[error("corpus line {line}: schema violation: {message}")]
    Schema { line: u64, message: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid file name or id: {0}")]
    InvalidName(String),

    #[error("malformed key: {0}")]
    MalformedKey(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("undefined compression ratio: raw size is zero")]
    UndefinedRatio,

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("keys out of order: {0}")]
    SortViolation(String),

    #[error("capacity exceeded: projected {projected} bytes > capacity {capacity} bytes")]
    Capacity { projected: u64, capacity: u64 },

    #[error("recovery error: {0}")]
    Recovery(String),

    #[error("batch aborted after {resolved} resolved keys: {source}")]
    Batch {
        resolved: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("cache miss for {content_id} and backend {backend} failed: {message}")]
    Backend {
        backend: String,
        content_id: String,
        message: String,
    },

    #[error("workload spec error: {0}")]
    Workload(String),

    #[error("report error: {0}")]
    Report(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn io_path(action: &str, path: &std::path::Path, source: io::Error) -> Self {
        Error::Io {
            context: format!("{action} {}", path.display()),
            source,
        }
    }

    /// Process exit code for the CLI: 1 usage, 2 data/integrity, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Backend { .. } => 3,
            Error::Config(_) | Error::Precondition(_) | Error::Workload(_) => 1,
            Error::Batch { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Report(e.to_string())
    }
}

pub trait IoContext<T> {
    fn ctx(self, action: &str, path: &std::path::Path) -> Result<T>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn ctx(self, action: &str, path: &std::path::Path) -> Result<T> {
        self.map_err(|e| Error::io_path(action, path, e))
    }
}
