//! Single choke-point for model traffic.
//!
//! Every generation and continuation-scoring call goes through [`Gateway`],
//! which routes by model id to a [`Backend`], applies the retry policy and
//! per-backend limits, and records to or replays from a [`Cassette`].
//!
//! In replay mode no backend is consulted at all: a request whose
//! fingerprint is absent from the cassette is an error.

mod backend;
mod cassette;
mod limiter;
mod mock;
mod openai;
mod request;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use backend::{Backend, BackendError, ChatResponse};
pub use cassette::{Cassette, CassetteEntry, EntryKind};
pub use limiter::Limiter;
pub use mock::{MockBackend, MockReply, MockScript};
pub use openai::{OpenAiBackend, OpenAiConfig};
pub use request::{
    Aggregation, ChatMessage, GenerationRequest, Role, ScoreRequest, ScoredContinuation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Call backends; no cassette.
    Live,
    /// Serve from the cassette when possible, otherwise call the backend and
    /// append the response.
    Record,
    /// Serve only from the cassette.
    Replay,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(Self::Live),
            "record" => Ok(Self::Record),
            "replay" => Ok(Self::Replay),
            other => Err(format!("unknown mode {other:?} (live, record, replay)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("backend call failed after {attempts} attempt(s): {source}")]
    Backend {
        attempts: u32,
        #[source]
        source: BackendError,
    },
    #[error("no cassette entry for fingerprint {fingerprint} (tag {tag:?})")]
    MissingCassette {
        fingerprint: String,
        tag: Option<String>,
    },
    #[error("response truncated (finish_reason {finish_reason:?}) for fingerprint {fingerprint}")]
    Truncated {
        fingerprint: String,
        finish_reason: String,
    },
    #[error("backend for model {model_id:?} does not support token log-probabilities")]
    LogprobsUnsupported { model_id: String },
    #[error("continuation to score is empty")]
    EmptyContinuation,
    #[error("no backend configured for model {model_id:?}")]
    NoBackend { model_id: String },
    #[error("cassette {path}: {message}")]
    CassetteIo { path: PathBuf, message: String },
    #[error("cassette entry {fingerprint} has the wrong kind or no logprobs")]
    CassetteKind { fingerprint: String },
}

impl GatewayError {
    /// Fingerprint of the request that failed, when known.
    pub fn fingerprint(&self) -> Option<&str> {
        match self {
            Self::MissingCassette { fingerprint, .. }
            | Self::Truncated { fingerprint, .. }
            | Self::CassetteKind { fingerprint } => Some(fingerprint),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

struct BackendSlot {
    backend: Arc<dyn Backend>,
    limiter: Limiter,
}

pub struct Gateway {
    mode: Mode,
    cassette: Option<Cassette>,
    backends: BTreeMap<String, BackendSlot>,
    routes: BTreeMap<String, String>,
    retry: RetryPolicy,
    aggregation: Aggregation,
    backend_calls: AtomicUsize,
}

pub struct GatewayBuilder {
    mode: Mode,
    cassette: Option<Cassette>,
    backends: BTreeMap<String, BackendSlot>,
    routes: BTreeMap<String, String>,
    retry: RetryPolicy,
    aggregation: Aggregation,
}

impl GatewayBuilder {
    pub fn backend(
        mut self,
        name: impl Into<String>,
        backend: Arc<dyn Backend>,
        max_in_flight: usize,
        min_interval: Duration,
    ) -> Self {
        self.backends.insert(
            name.into(),
            BackendSlot {
                backend,
                limiter: Limiter::new(max_in_flight, min_interval),
            },
        );
        self
    }

    /// Routes requests for `model_id` to the backend registered as `backend`.
    /// A route for model `*` catches every unrouted model.
    pub fn route(mut self, model_id: impl Into<String>, backend: impl Into<String>) -> Self {
        self.routes.insert(model_id.into(), backend.into());
        self
    }

    pub fn cassette(mut self, cassette: Cassette) -> Self {
        self.cassette = Some(cassette);
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn aggregation(mut self, aggregation: Aggregation) -> Self {
        self.aggregation = aggregation;
        self
    }

    pub fn build(self) -> Result<Gateway, GatewayError> {
        if self.mode != Mode::Live && self.cassette.is_none() {
            return Err(GatewayError::CassetteIo {
                path: PathBuf::new(),
                message: format!("{:?} mode requires a cassette", self.mode),
            });
        }
        Ok(Gateway {
            mode: self.mode,
            cassette: self.cassette,
            backends: self.backends,
            routes: self.routes,
            retry: self.retry,
            aggregation: self.aggregation,
            backend_calls: AtomicUsize::new(0),
        })
    }
}

impl Gateway {
    pub fn builder(mode: Mode) -> GatewayBuilder {
        GatewayBuilder {
            mode,
            cassette: None,
            backends: BTreeMap::new(),
            routes: BTreeMap::new(),
            retry: RetryPolicy::default(),
            aggregation: Aggregation::default(),
        }
    }

    /// Live gateway over a single backend serving every model.
    pub fn single(backend: Arc<dyn Backend>) -> Self {
        Self::builder(Mode::Live)
            .backend("default", backend, 8, Duration::ZERO)
            .route("*", "default")
            .build()
            .expect("live mode needs no cassette")
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn aggregation(&self) -> Aggregation {
        self.aggregation
    }

    pub fn cassette(&self) -> Option<&Cassette> {
        self.cassette.as_ref()
    }

    /// Number of requests that reached a backend (retries included).
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    fn slot(&self, model_id: &str) -> Result<&BackendSlot, GatewayError> {
        self.routes
            .get(model_id)
            .or_else(|| self.routes.get("*"))
            .and_then(|name| self.backends.get(name))
            .ok_or_else(|| GatewayError::NoBackend {
                model_id: model_id.to_string(),
            })
    }

    fn with_retry<T>(
        &self,
        slot: &BackendSlot,
        mut call: impl FnMut(&dyn Backend) -> Result<T, BackendError>,
    ) -> Result<T, GatewayError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            let result = {
                let _permit = slot.limiter.acquire();
                self.backend_calls.fetch_add(1, Ordering::SeqCst);
                call(slot.backend.as_ref())
            };
            match result {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < self.retry.max_attempts => {
                    let delay = self.retry.base_delay * 2u32.saturating_pow(attempt - 1);
                    tracing::warn!(attempt, error = %e, "retrying backend call");
                    std::thread::sleep(delay);
                }
                Err(source) => {
                    return Err(GatewayError::Backend {
                        attempts: attempt,
                        source,
                    })
                }
            }
        }
    }

    /// Runs a chat generation and returns the model text.
    pub fn generate(&self, request: &GenerationRequest) -> Result<String, GatewayError> {
        let fingerprint = request.fingerprint();
        if let Some(text) = self.lookup_chat(&fingerprint, request)? {
            return Ok(text);
        }
        let slot = self.slot(&request.model_id)?;
        let response = self.with_retry(slot, |b| b.chat(request))?;
        if response.finish_reason != "stop" {
            return Err(GatewayError::Truncated {
                fingerprint,
                finish_reason: response.finish_reason,
            });
        }
        if let (Mode::Record, Some(cassette)) = (self.mode, &self.cassette) {
            cassette.append(CassetteEntry {
                fingerprint,
                kind: EntryKind::Chat,
                request: serde_json::to_value(request).expect("request serializes"),
                response: response.text.clone(),
                logprobs: None,
            })?;
        }
        Ok(response.text)
    }

    fn lookup_chat(
        &self,
        fingerprint: &str,
        request: &GenerationRequest,
    ) -> Result<Option<String>, GatewayError> {
        if self.mode == Mode::Live {
            return Ok(None);
        }
        let cassette = self
            .cassette
            .as_ref()
            .expect("non-live gateway has a cassette");
        match cassette.get(fingerprint) {
            Some(e) if e.kind == EntryKind::Chat => Ok(Some(e.response)),
            Some(_) => Err(GatewayError::CassetteKind {
                fingerprint: fingerprint.to_string(),
            }),
            None if self.mode == Mode::Replay => Err(GatewayError::MissingCassette {
                fingerprint: fingerprint.to_string(),
                tag: request.tag.clone(),
            }),
            None => Ok(None),
        }
    }

    /// Scores `continuation` after `prefix` with the gateway's aggregation.
    pub fn score_continuation(
        &self,
        request: &ScoreRequest,
    ) -> Result<ScoredContinuation, GatewayError> {
        if request.continuation.trim().is_empty() {
            return Err(GatewayError::EmptyContinuation);
        }
        let fingerprint = request.fingerprint();
        let logprobs = match self.lookup_score(&fingerprint, request)? {
            Some(lps) => lps,
            None => {
                let slot = self.slot(&request.model_id)?;
                if !slot.backend.supports_logprobs() {
                    return Err(GatewayError::LogprobsUnsupported {
                        model_id: request.model_id.clone(),
                    });
                }
                let lps = self
                    .with_retry(slot, |b| b.continuation_logprobs(request))
                    .map_err(|e| match e {
                        GatewayError::Backend {
                            source: BackendError::LogprobsUnsupported,
                            ..
                        } => GatewayError::LogprobsUnsupported {
                            model_id: request.model_id.clone(),
                        },
                        other => other,
                    })?;
                if let (Mode::Record, Some(cassette)) = (self.mode, &self.cassette) {
                    cassette.append(CassetteEntry {
                        fingerprint: fingerprint.clone(),
                        kind: EntryKind::Score,
                        request: serde_json::to_value(request).expect("request serializes"),
                        response: request.continuation.clone(),
                        logprobs: Some(lps.clone()),
                    })?;
                }
                lps
            }
        };
        let aggregate = self
            .aggregation
            .apply(&logprobs)
            .ok_or(GatewayError::CassetteKind { fingerprint })?;
        Ok(ScoredContinuation {
            prefix_text: request.prefix.clone(),
            continuation_text: request.continuation.clone(),
            token_logprobs: logprobs,
            aggregate,
        })
    }

    fn lookup_score(
        &self,
        fingerprint: &str,
        request: &ScoreRequest,
    ) -> Result<Option<Vec<f64>>, GatewayError> {
        if self.mode == Mode::Live {
            return Ok(None);
        }
        let cassette = self
            .cassette
            .as_ref()
            .expect("non-live gateway has a cassette");
        match cassette.get(fingerprint) {
            Some(CassetteEntry {
                kind: EntryKind::Score,
                logprobs: Some(lps),
                ..
            }) if !lps.is_empty() => Ok(Some(lps)),
            Some(_) => Err(GatewayError::CassetteKind {
                fingerprint: fingerprint.to_string(),
            }),
            None if self.mode == Mode::Replay => Err(GatewayError::MissingCassette {
                fingerprint: fingerprint.to_string(),
                tag: request.tag.clone(),
            }),
            None => Ok(None),
        }
    }
}
