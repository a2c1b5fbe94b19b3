//! Scripted backend for tests and fixture recording.
//!
//! Replies are looked up by request tag. Each tag holds a queue; the n-th
//! call for a tag receives the n-th reply and the last reply repeats once the
//! queue is exhausted. Keys starting with `*` match any tag ending in the
//! rest of the key (`*/summarize`), longest suffix first.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::backend::{Backend, BackendError, ChatResponse};
use super::{GenerationRequest, ScoreRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockReply {
    Text(String),
    Detailed {
        text: String,
        #[serde(default = "stop")]
        finish_reason: String,
    },
    Failure {
        transport_error: String,
    },
}

fn stop() -> String {
    "stop".to_string()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub chat: BTreeMap<String, Vec<MockReply>>,
    #[serde(default)]
    pub score: BTreeMap<String, Vec<f64>>,
    #[serde(default = "yes")]
    pub supports_logprobs: bool,
}

fn yes() -> bool {
    true
}

impl MockScript {
    pub fn load(path: impl AsRef<Path>) -> crate::Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        Ok(serde_json::from_str(&raw)?)
    }

    /// Merges `other` into `self`; later keys replace earlier ones.
    pub fn extend(&mut self, other: MockScript) {
        self.chat.extend(other.chat);
        self.score.extend(other.score);
    }
}

pub struct MockBackend {
    script: MockScript,
    cursors: Mutex<BTreeMap<String, usize>>,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            cursors: Mutex::new(BTreeMap::new()),
            calls: AtomicUsize::new(0),
        }
    }

    /// Mock that answers every chat request with `text`.
    pub fn constant(text: impl Into<String>) -> Self {
        let mut script = MockScript {
            supports_logprobs: true,
            ..Default::default()
        };
        script
            .chat
            .insert("*".into(), vec![MockReply::Text(text.into())]);
        Self::new(script)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn resolve<'a, V>(map: &'a BTreeMap<String, V>, tag: &str) -> Option<(&'a str, &'a V)> {
        if let Some((k, v)) = map.get_key_value(tag) {
            return Some((k.as_str(), v));
        }
        map.iter()
            .filter_map(|(k, v)| {
                k.strip_prefix('*')
                    .filter(|suffix| tag.ends_with(suffix))
                    .map(|suffix| (suffix.len(), k.as_str(), v))
            })
            .max_by_key(|(len, _, _)| *len)
            .map(|(_, k, v)| (k, v))
    }
}

impl Backend for MockBackend {
    fn chat(&self, request: &GenerationRequest) -> Result<ChatResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let tag = request.tag.as_deref().unwrap_or("");
        let (key, replies) = Self::resolve(&self.script.chat, tag)
            .ok_or_else(|| BackendError::Protocol(format!("mock has no script for tag {tag:?}")))?;
        if replies.is_empty() {
            return Err(BackendError::Protocol(format!(
                "mock script {key:?} is empty"
            )));
        }
        let idx = {
            let mut cursors = self.cursors.lock().expect("mock cursor lock");
            let cursor = cursors.entry(format!("{key}|{tag}")).or_insert(0);
            let idx = (*cursor).min(replies.len() - 1);
            *cursor += 1;
            idx
        };
        match &replies[idx] {
            MockReply::Text(text) => Ok(ChatResponse::stopped(text.clone())),
            MockReply::Detailed {
                text,
                finish_reason,
            } => Ok(ChatResponse {
                text: text.clone(),
                finish_reason: finish_reason.clone(),
            }),
            MockReply::Failure { transport_error } => {
                Err(BackendError::Transport(transport_error.clone()))
            }
        }
    }

    fn continuation_logprobs(&self, request: &ScoreRequest) -> Result<Vec<f64>, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if !self.script.supports_logprobs {
            return Err(BackendError::LogprobsUnsupported);
        }
        let tag = request.tag.as_deref().unwrap_or("");
        Self::resolve(&self.script.score, tag)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| BackendError::Protocol(format!("mock has no logprobs for tag {tag:?}")))
    }

    fn supports_logprobs(&self) -> bool {
        self.script.supports_logprobs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(tag: &str) -> GenerationRequest {
        GenerationRequest {
            model_id: "mock".into(),
            messages: vec![],
            temperature: 0.0,
            max_output_tokens: 16,
            tag: Some(tag.into()),
        }
    }

    #[test]
    fn queue_advances_then_repeats() {
        let script: MockScript = serde_json::from_value(serde_json::json!({
            "chat": { "e1/ddx": ["first", {"text": "second"}] }
        }))
        .unwrap();
        let mock = MockBackend::new(script);
        let texts: Vec<_> = (0..3)
            .map(|_| mock.chat(&request("e1/ddx")).unwrap().text)
            .collect();
        assert_eq!(texts, ["first", "second", "second"]);
        assert_eq!(mock.calls(), 3);
    }

    #[test]
    fn wildcard_suffix_prefers_longest() {
        let script: MockScript = serde_json::from_value(serde_json::json!({
            "chat": { "*": ["any"], "*/summarize": ["summary"] }
        }))
        .unwrap();
        let mock = MockBackend::new(script);
        assert_eq!(mock.chat(&request("e9/summarize")).unwrap().text, "summary");
        assert_eq!(mock.chat(&request("e9/ddx_chat")).unwrap().text, "any");
    }

    #[test]
    fn scripted_failure_and_truncation() {
        let script: MockScript = serde_json::from_value(serde_json::json!({
            "chat": {
                "a": [{"transport_error": "connection reset"}],
                "b": [{"text": "cut", "finish_reason": "length"}]
            }
        }))
        .unwrap();
        let mock = MockBackend::new(script);
        assert!(matches!(
            mock.chat(&request("a")),
            Err(BackendError::Transport(_))
        ));
        assert_eq!(mock.chat(&request("b")).unwrap().finish_reason, "length");
        assert!(mock.chat(&request("c")).is_err());
    }

    #[test]
    fn constant_mock() {
        assert_eq!(
            MockBackend::constant("hello")
                .chat(&request("x"))
                .unwrap()
                .text,
            "hello"
        );
    }
}
