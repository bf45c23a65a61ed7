use std::path::PathBuf;

use thiserror::Error;

/// Problems with a configuration file, each named so that callers (and
/// users) can tell them apart.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("missing seed: every config must set `seed` (no entropy default)")]
    MissingSeed,

    #[error("thresholds not increasing: {0:?}")]
    ThresholdsNotIncreasing(Vec<f64>),

    #[error("{block}: d/p + 2/q = {index} (d={dim}, p={p}, q={q}) must be < {bound}")]
    Hypothesis {
        block: String,
        index: f64,
        dim: usize,
        p: f64,
        q: f64,
        bound: f64,
    },

    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },
}

impl ConfigError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("{block}: {source}")]
    Block {
        block: String,
        #[source]
        source: roughsde::Error,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("manifest check failed: {0}")]
    Manifest(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
