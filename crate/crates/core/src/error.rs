use std::path::PathBuf;

/// Errors raised by the library.
///
/// Variants fall into three families, which the CLI maps onto exit codes:
/// configuration problems, data problems, and provider timeouts.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: failed to decode image: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{}: missing label file for image stem '{stem}'", root.display())]
    MissingLabel { root: PathBuf, stem: String },

    #[error("{}:{line}: {message}", path.display())]
    LabelParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, found {found}{}", context_suffix(.context))]
    Dimension {
        expected: usize,
        found: usize,
        context: Option<String>,
    },

    #[error("{}:{line}: {message}", path.display())]
    EmbeddingFile {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("embedding provider has no vector for {} id(s) at epoch {epoch}: {}", ids.len(), ids.join(", "))]
    MissingEmbeddings { epoch: u32, ids: Vec<String> },

    #[error("timed out waiting for embedding file {} for epoch {epoch}", path.display())]
    ProviderTimeout { epoch: u32, path: PathBuf },

    #[error("shrinkage ratio eliminates all candidates (n_a = {n_a}, k = {k})")]
    EmptySelection { n_a: usize, k: f64 },

    #[error("{0}")]
    Augmentation(String),

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

fn context_suffix(context: &Option<String>) -> String {
    context
        .as_deref()
        .map(|c| format!(" ({c})"))
        .unwrap_or_default()
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit code families used by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Timeout,
}

impl ErrorKind {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Timeout => 4,
        }
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::EmptySelection { .. } => ErrorKind::Config,
            Error::ProviderTimeout { .. } => ErrorKind::Timeout,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dimension(expected: usize, found: usize) -> Self {
        Error::Dimension {
            expected,
            found,
            context: None,
        }
    }
}
