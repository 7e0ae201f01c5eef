use std::path::{Path, PathBuf};

use crate::config::ConfigError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Sim(#[from] oscnet::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Refused(String),
    #[error("usage: {0}")]
    Usage(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 0 ok, 1 configuration, 2 numerical/divergence, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Usage(_) => 1,
            Self::Sim(e) => match e {
                oscnet::Error::Config(_) | oscnet::Error::Design(_) => 1,
                _ => 2,
            },
            Self::Io { .. } | Self::Refused(_) => 3,
        }
    }
}
