//! Adapter for OpenAI-compatible HTTP APIs (OpenAI, vLLM, llama.cpp server,
//! and similar). Chat generation uses `/chat/completions`; continuation
//! scoring uses the legacy `/completions` endpoint with `echo` so the prompt
//! tokens come back with their log-probabilities.

use std::time::Duration;

use serde_json::{json, Value};

use super::backend::{Backend, BackendError, ChatResponse};
use super::{GenerationRequest, ScoreRequest};

#[derive(Debug, Clone)]
pub struct OpenAiConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub supports_logprobs: bool,
    pub timeout: Duration,
}

pub struct OpenAiBackend {
    config: OpenAiConfig,
    client: reqwest::blocking::Client,
}

impl OpenAiBackend {
    pub fn new(config: OpenAiConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let url = format!("{}/{}", self.config.base_url.trim_end_matches('/'), path);
        let mut req = self.client.post(&url).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Http {
                status: status.as_u16(),
                body: text,
            });
        }
        serde_json::from_str(&text).map_err(|e| BackendError::Protocol(e.to_string()))
    }
}

pub(crate) fn chat_body(request: &GenerationRequest) -> Value {
    json!({
        "model": request.model_id,
        "messages": request.messages,
        "temperature": request.temperature,
        "max_tokens": request.max_output_tokens,
    })
}

pub(crate) fn parse_chat_response(body: &Value) -> Result<ChatResponse, BackendError> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Protocol("response has no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Protocol("choice has no message content".into()))?;
    let finish_reason = choice
        .get("finish_reason")
        .and_then(Value::as_str)
        .unwrap_or("stop");
    Ok(ChatResponse {
        text: text.to_string(),
        finish_reason: finish_reason.to_string(),
    })
}

pub(crate) fn score_body(request: &ScoreRequest) -> Value {
    json!({
        "model": request.model_id,
        "prompt": format!("{}{}", request.prefix, request.continuation),
        "max_tokens": 1,
        "temperature": 0.0,
        "echo": true,
        "logprobs": 1,
    })
}

/// Picks the log-probs of echoed prompt tokens that start inside the
/// continuation. Offsets are character offsets into `prefix + continuation`.
pub(crate) fn parse_continuation_logprobs(
    body: &Value,
    prefix: &str,
    continuation: &str,
) -> Result<Vec<f64>, BackendError> {
    let lp = body
        .pointer("/choices/0/logprobs")
        .ok_or_else(|| BackendError::Protocol("response has no logprobs".into()))?;
    let offsets = lp
        .get("text_offset")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::Protocol("logprobs has no text_offset".into()))?;
    let values = lp
        .get("token_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::Protocol("logprobs has no token_logprobs".into()))?;
    if offsets.len() != values.len() {
        return Err(BackendError::Protocol(
            "text_offset and token_logprobs differ in length".into(),
        ));
    }
    let start = prefix.chars().count() as u64;
    let end = start + continuation.chars().count() as u64;
    let mut out = Vec::new();
    for (offset, value) in offsets.iter().zip(values) {
        let offset = offset
            .as_u64()
            .ok_or_else(|| BackendError::Protocol("non-integer text offset".into()))?;
        if offset < start || offset >= end {
            continue;
        }
        let v = value
            .as_f64()
            .ok_or_else(|| BackendError::Protocol(format!("null logprob at offset {offset}")))?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(BackendError::Protocol(
            "no echoed tokens fall inside the continuation".into(),
        ));
    }
    Ok(out)
}

impl Backend for OpenAiBackend {
    fn chat(&self, request: &GenerationRequest) -> Result<ChatResponse, BackendError> {
        let body = self.post("chat/completions", &chat_body(request))?;
        parse_chat_response(&body)
    }

    fn continuation_logprobs(&self, request: &ScoreRequest) -> Result<Vec<f64>, BackendError> {
        if !self.config.supports_logprobs {
            return Err(BackendError::LogprobsUnsupported);
        }
        let body = self.post("completions", &score_body(request))?;
        parse_continuation_logprobs(&body, &request.prefix, &request.continuation)
    }

    fn supports_logprobs(&self) -> bool {
        self.config.supports_logprobs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ChatMessage;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    #[test]
    fn chat_wire_format() {
        let req = GenerationRequest {
            model_id: "gpt-4".into(),
            messages: vec![ChatMessage::user("hello")],
            temperature: 0.0,
            max_output_tokens: 64,
            tag: Some("never-sent".into()),
        };
        let body = chat_body(&req);
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["max_tokens"], 64);
        assert!(body.get("tag").is_none());

        let resp = json!({"choices": [{"message": {"content": "hi"}, "finish_reason": "length"}]});
        let parsed = parse_chat_response(&resp).unwrap();
        assert_eq!(parsed.text, "hi");
        assert_eq!(parsed.finish_reason, "length");
        assert!(parse_chat_response(&json!({"choices": []})).is_err());
    }

    #[test]
    fn continuation_tokens_selected_by_offset() {
        let prefix = "Chat. The patient most likely has";
        let continuation = " anemia.";
        let p = prefix.len() as u64;
        let body = json!({"choices": [{"logprobs": {
            "tokens": ["Chat", ".", " The", " ...", " an", "emia", ".", " X"],
            "token_logprobs": [null, -0.1, -0.2, -0.3, -1.5, -0.5, -0.25, -4.0],
            "text_offset": [0, 4, 5, 9, p, p + 3, p + 7, p + 8]
        }}]});
        let lps = parse_continuation_logprobs(&body, prefix, continuation).unwrap();
        assert_eq!(lps, vec![-1.5, -0.5, -0.25]);
    }

    #[test]
    fn null_inside_continuation_is_protocol_error() {
        let body = json!({"choices": [{"logprobs": {
            "token_logprobs": [null], "text_offset": [0]
        }}]});
        assert!(parse_continuation_logprobs(&body, "", "x").is_err());
    }

    #[test]
    fn round_trip_against_local_server() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut content_length = 0usize;
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; content_length];
            reader.read_exact(&mut body).unwrap();
            let payload = r#"{"choices":[{"message":{"role":"assistant","content":"pong"},"finish_reason":"stop"}]}"#;
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                payload.len(),
                payload
            )
            .unwrap();
            (request_line, String::from_utf8(body).unwrap())
        });

        let backend = OpenAiBackend::new(OpenAiConfig {
            base_url: format!("http://{addr}/v1"),
            api_key: Some("test-key".into()),
            supports_logprobs: false,
            timeout: Duration::from_secs(5),
        })
        .unwrap();
        let req = GenerationRequest {
            model_id: "m".into(),
            messages: vec![ChatMessage::user("ping")],
            temperature: 0.0,
            max_output_tokens: 8,
            tag: None,
        };
        let resp = backend.chat(&req).unwrap();
        assert_eq!(resp.text, "pong");
        let (line, body) = server.join().unwrap();
        assert!(line.starts_with("POST /v1/chat/completions"), "{line}");
        let sent: Value = serde_json::from_str(&body).unwrap();
        assert_eq!(sent["model"], "m");

        let score = ScoreRequest {
            model_id: "m".into(),
            prefix: "a".into(),
            continuation: "b".into(),
            tag: None,
        };
        assert_eq!(
            backend.continuation_logprobs(&score),
            Err(BackendError::LogprobsUnsupported)
        );
    }
}
