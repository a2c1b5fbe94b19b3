use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// A chat-style generation call. `tag` labels the call site
/// (`<encounter>/<stage>`); it is part of the fingerprint but never sent to
/// a provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GenerationRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl GenerationRequest {
    pub fn fingerprint(&self) -> String {
        fingerprint_of("chat", self)
    }
}

/// Request for the log-probabilities of `continuation` given `prefix`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ScoreRequest {
    pub model_id: String,
    pub prefix: String,
    pub continuation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl ScoreRequest {
    pub fn fingerprint(&self) -> String {
        fingerprint_of("score", self)
    }
}

/// SHA-256 over the request rendered as JSON with sorted object keys, so the
/// hash depends only on field values.
pub(crate) fn fingerprint_of<T: Serialize>(kind: &str, value: &T) -> String {
    let mut tree = serde_json::to_value(value).expect("request types always serialize");
    if let serde_json::Value::Object(map) = &mut tree {
        map.insert(
            "kind".to_string(),
            serde_json::Value::String(kind.to_string()),
        );
    }
    // serde_json::Map is a BTreeMap here (no preserve_order), so keys are sorted.
    let canonical = serde_json::to_string(&tree).expect("json value always serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// How per-token log-probabilities are folded into one completion score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Length-normalized: arithmetic mean of the token log-probs.
    #[default]
    Mean,
    Sum,
    /// Log-prob of the final continuation token only.
    Last,
}

impl Aggregation {
    pub fn apply(self, logprobs: &[f64]) -> Option<f64> {
        if logprobs.is_empty() {
            return None;
        }
        Some(match self {
            Self::Mean => logprobs.iter().sum::<f64>() / logprobs.len() as f64,
            Self::Sum => logprobs.iter().sum(),
            Self::Last => *logprobs.last().expect("non-empty"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ScoredContinuation {
    pub prefix_text: String,
    pub continuation_text: String,
    pub token_logprobs: Vec<f64>,
    pub aggregate: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> GenerationRequest {
        GenerationRequest {
            model_id: "gpt-4".into(),
            messages: vec![ChatMessage::system("sys"), ChatMessage::user("hi")],
            temperature: 0.0,
            max_output_tokens: 512,
            tag: Some("e1/summarize".into()),
        }
    }

    #[test]
    fn fingerprint_is_pure() {
        assert_eq!(req().fingerprint(), req().fingerprint());
        assert_eq!(req().fingerprint().len(), 64);
    }

    #[test]
    fn fingerprint_sees_every_field() {
        let base = req().fingerprint();
        let mut r = req();
        r.temperature = 0.5;
        assert_ne!(r.fingerprint(), base);
        let mut r = req();
        r.max_output_tokens = 10;
        assert_ne!(r.fingerprint(), base);
        let mut r = req();
        r.tag = None;
        assert_ne!(r.fingerprint(), base);
        let mut r = req();
        r.messages[1].content.push('!');
        assert_ne!(r.fingerprint(), base);
    }

    #[test]
    fn chat_and_score_fingerprints_do_not_collide() {
        let s = ScoreRequest {
            model_id: "m".into(),
            prefix: "p".into(),
            continuation: "c".into(),
            tag: None,
        };
        assert_ne!(s.fingerprint(), fingerprint_of("chat", &s));
    }

    #[test]
    fn aggregation_variants() {
        assert_eq!(Aggregation::Mean.apply(&[-1.0, -3.0]), Some(-2.0));
        assert_eq!(Aggregation::Mean.apply(&[-0.5]), Some(-0.5));
        assert_eq!(Aggregation::Sum.apply(&[-1.0, -3.0]), Some(-4.0));
        assert_eq!(Aggregation::Last.apply(&[-1.0, -3.0]), Some(-3.0));
        assert_eq!(Aggregation::Mean.apply(&[]), None);
    }
}
