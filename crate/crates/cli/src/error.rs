use std::path::{Path, PathBuf};

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] pec_core::Error),

    #[error("config error: {0}")]
    Config(String),

    /// An input artifact of an earlier pipeline step is absent.
    #[error("missing {path}: run `pecopt {command}` first")]
    Missing { path: PathBuf, command: &'static str },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => match e {
                pec_core::Error::Domain(_) => "domain",
                pec_core::Error::Parse { .. } => "parse",
                pec_core::Error::Training(_) => "training",
                pec_core::Error::Numerical(_) => "numerical",
                pec_core::Error::Usage(_) => "usage",
                pec_core::Error::Io { .. } => "io",
                pec_core::Error::Serde(_) => "serialization",
            },
            CliError::Config(_) => "config",
            CliError::Missing { .. } => "missing_input",
            CliError::Io { .. } => "io",
        }
    }

    fn path(&self) -> Option<&Path> {
        match self {
            CliError::Missing { path, .. } | CliError::Io { path, .. } => Some(path),
            CliError::Core(pec_core::Error::Io { path, .. }) => Some(path),
            _ => None,
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut e = json!({ "kind": self.kind(), "message": self.to_string() });
        if let Some(p) = self.path() {
            e["path"] = json!(p.display().to_string());
        }
        json!({ "error": e })
    }
}
