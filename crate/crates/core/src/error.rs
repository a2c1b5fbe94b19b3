use std::path::PathBuf;

use crate::pipeline::Stage;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Invalid(String),

    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),

    #[error("stage {stage} failed after {attempts} attempt(s) [fingerprint {fingerprint}]: {}", violations.join("; "))]
    Stage {
        stage: Stage,
        fingerprint: String,
        attempts: u32,
        violations: Vec<String>,
    },

    #[error("stage {stage} gateway failure [fingerprint {fingerprint}]: {source}")]
    StageGateway {
        stage: Stage,
        fingerprint: String,
        #[source]
        source: crate::gateway::GatewayError,
    },

    #[error("{0}")]
    Scoring(String),

    #[error("correlation error: {0}")]
    Correlation(String),

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("refusing to overwrite existing output at {0} (use force)")]
    WouldOverwrite(PathBuf),

    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
