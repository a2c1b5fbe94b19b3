use std::collections::BTreeSet;
use std::fmt;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::FactId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ContentCategory {
    Medical,
    CareAccessOrSdoh,
    NonMedical,
}

impl ContentCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Medical => "medical",
            Self::CareAccessOrSdoh => "care_access_or_sdoh",
            Self::NonMedical => "non_medical",
        }
    }

    pub fn parse_label(raw: &str) -> Option<Self> {
        match normalize_label(raw).as_str() {
            "medical" => Some(Self::Medical),
            "care_access_or_sdoh"
            | "care_access"
            | "sdoh"
            | "care_access_sdoh"
            | "social_determinants_of_health"
            | "care_access_or_social_determinants_of_health" => Some(Self::CareAccessOrSdoh),
            "non_medical" | "nonmedical" => Some(Self::NonMedical),
            _ => None,
        }
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum Importance {
    Critical,
    Important,
    Other,
}

impl Importance {
    pub const ALL: [Importance; 3] = [Self::Critical, Self::Important, Self::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Critical => "critical",
            Self::Important => "important",
            Self::Other => "other",
        }
    }

    pub fn parse_label(raw: &str) -> Option<Self> {
        match normalize_label(raw).as_str() {
            "critical" => Some(Self::Critical),
            "important" => Some(Self::Important),
            "other" => Some(Self::Other),
            _ => None,
        }
    }
}

impl fmt::Display for Importance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lowercases and collapses separators to `_`, so `Care Access / SDOH`
/// becomes `care_access_sdoh`.
pub(crate) fn normalize_label(raw: &str) -> String {
    raw.trim()
        .trim_matches(|c: char| c == '*' || c == '`')
        .to_ascii_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

/// An atomic statement extracted from a dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Fact {
    pub fact_id: FactId,
    pub text: String,
    pub content_category: ContentCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub importance: Option<Importance>,
}

impl Fact {
    pub fn new(id: u32, text: impl Into<String>, category: ContentCategory) -> Self {
        Self {
            fact_id: FactId(id),
            text: text.into(),
            content_category: category,
            importance: None,
        }
    }

    pub fn with_importance(mut self, importance: Importance) -> Self {
        self.importance = Some(importance);
        self
    }
}

/// Violations of the fact-list invariants: non-empty text, unique ids,
/// and ids forming exactly `F0..F(n-1)`.
pub fn fact_list_violations(facts: &[Fact]) -> Vec<String> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for fact in facts {
        if fact.text.trim().is_empty() {
            out.push(format!("fact {} has empty text", fact.fact_id));
        }
        if !seen.insert(fact.fact_id) {
            out.push(format!("duplicate fact id {}", fact.fact_id));
        }
    }
    let n = facts.len() as u32;
    let missing: Vec<String> = (0..n)
        .map(FactId)
        .filter(|id| !seen.contains(id))
        .map(|id| id.to_string())
        .collect();
    if !missing.is_empty() {
        out.push(format!(
            "fact ids are not contiguous; missing {}",
            missing.join(", ")
        ));
    }
    let beyond: Vec<String> = seen
        .iter()
        .filter(|id| id.0 >= n)
        .map(|id| id.to_string())
        .collect();
    if !beyond.is_empty() && missing.is_empty() {
        out.push(format!("fact ids out of range: {}", beyond.join(", ")));
    }
    out
}
