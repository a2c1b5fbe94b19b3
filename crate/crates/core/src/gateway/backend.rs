use super::{GenerationRequest, ScoreRequest};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: String,
}

impl ChatResponse {
    pub fn stopped(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            finish_reason: "stop".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Connection-level failure; retried by the gateway.
    #[error("transport error: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    Http { status: u16, body: String },
    /// The provider answered but the payload could not be understood.
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("backend does not expose token log-probabilities")]
    LogprobsUnsupported,
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        match self {
            Self::Transport(_) => true,
            Self::Http { status, .. } => *status == 429 || *status >= 500,
            Self::Protocol(_) | Self::LogprobsUnsupported => false,
        }
    }
}

/// A model provider. Implementations must be safe to call from several
/// worker threads at once.
pub trait Backend: Send + Sync {
    fn chat(&self, request: &GenerationRequest) -> Result<ChatResponse, BackendError>;

    /// Log-probabilities of each token of `request.continuation` given
    /// `request.prefix`.
    fn continuation_logprobs(&self, request: &ScoreRequest) -> Result<Vec<f64>, BackendError>;

    fn supports_logprobs(&self) -> bool;
}
