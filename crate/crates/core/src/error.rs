use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid JSON in {path}: {message}")]
    Json { path: PathBuf, message: String },

    #[error("ontology error: {0}")]
    Ontology(String),

    #[error("unknown data type label: {0:?}")]
    UnknownLabel(String),

    #[error("malformed HAR document: {0}")]
    Har(String),

    #[error("corpus manifest error: {0}")]
    Manifest(String),

    #[error("trace record error in {file}: {message}")]
    TraceRecord { file: String, message: String },

    #[error("unparseable URL {url:?}: {message}")]
    Url { url: String, message: String },

    #[error("public suffix list error: {0}")]
    Psl(String),

    #[error("{fqdn:?} has no registrable domain: {reason}")]
    NoRegistrableDomain { fqdn: String, reason: String },

    #[error("blocklist {path} unreadable: {message}")]
    Blocklist { path: PathBuf, message: String },

    #[error("classifier error: {0}")]
    Classifier(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("disclosures file error: {0}")]
    Disclosures(String),

    #[error("labeled sample error: {0}")]
    Sample(String),

    #[error("missing pipeline store {path}; run the earlier stage first")]
    MissingStore { path: PathBuf },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Json {
            path: path.into(),
            message: err.to_string(),
        }
    }
}
