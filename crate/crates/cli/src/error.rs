use std::path::PathBuf;
use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("reading config {}: {source}", path.display())]
    ConfigFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parsing config {}: {source}", path.display())]
    ConfigJson {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("reading dataset {}: {source}", path.display())]
    Dataset {
        path: PathBuf,
        #[source]
        source: porbnet::Error,
    },

    #[error("writing {}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Model(#[from] porbnet::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        use porbnet::Error as E;
        match self {
            CliError::Config(_)
            | CliError::ConfigFile { .. }
            | CliError::ConfigJson { .. }
            | CliError::Dataset { .. } => ExitCode::from(2),
            CliError::Model(E::SamplerAbort(_)) => ExitCode::from(3),
            CliError::Model(E::InvalidParameter { .. } | E::Parse { .. } | E::Empty(_) | E::DegenerateRange(_)) => {
                ExitCode::from(2)
            }
            _ => ExitCode::FAILURE,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
