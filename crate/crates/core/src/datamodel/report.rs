use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{FactId, Importance};

/// A fact judged wholly or partially missing from the summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Omission {
    pub fact_id: FactId,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FactScore {
    pub fact_id: FactId,
    pub importance: Importance,
    pub importance_weight: f64,
    pub uniqueness_weights: Vec<f64>,
    pub combined: f64,
}

impl FactScore {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.combined > 0.0 && self.combined <= 1.0) {
            out.push(format!(
                "{} combined score {} outside (0, 1]",
                self.fact_id, self.combined
            ));
        }
        if self.combined < self.importance_weight {
            out.push(format!(
                "{} combined score below importance weight",
                self.fact_id
            ));
        }
        if self.uniqueness_weights.iter().any(|u| self.combined < *u) {
            out.push(format!(
                "{} combined score below a uniqueness weight",
                self.fact_id
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum MarginUndefined {
    /// The chat differential has no non-probable entry.
    NoChatAlternative,
    /// The summary differential has no non-probable entry.
    NoSummaryAlternative,
    /// `|l_s0 - l_s1|` fell below epsilon.
    ZeroSummaryMargin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum MarginRatio {
    Defined(f64),
    Undefined(MarginUndefined),
}

impl MarginRatio {
    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Defined(v) => Some(*v),
            Self::Undefined(_) => None,
        }
    }
}

/// Completion scores for the chat-top diagnosis against the best
/// non-probable alternative, conditioned on the chat and on the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CompletionMargin {
    pub top_diagnosis: String,
    pub chat_alternative: Option<String>,
    pub summary_alternative: Option<String>,
    pub l_c0: f64,
    pub l_c1: Option<f64>,
    pub l_s0: f64,
    pub l_s1: Option<f64>,
    pub ratio: MarginRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ScoredOmission {
    pub omission: Omission,
    pub score: FactScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct OmissionReport {
    pub encounter_id: String,
    pub omissions: Vec<ScoredOmission>,
    pub omission_count: usize,
    pub cumulative_weight: f64,
    pub margin: Option<CompletionMargin>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl OmissionReport {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.omission_count != self.omissions.len() {
            out.push(format!(
                "omission_count {} does not match {} listed omissions",
                self.omission_count,
                self.omissions.len()
            ));
        }
        let sum: f64 = self.omissions.iter().map(|o| o.score.combined).sum();
        if (sum - self.cumulative_weight).abs() > 1e-9 {
            out.push(format!(
                "cumulative_weight {} does not match score sum {sum}",
                self.cumulative_weight
            ));
        }
        if (self.cumulative_weight == 0.0) != self.omissions.is_empty() {
            out.push("cumulative_weight is zero iff there are no omissions".to_string());
        }
        for o in &self.omissions {
            if o.omission.fact_id != o.score.fact_id {
                out.push(format!(
                    "omission {} paired with score for {}",
                    o.omission.fact_id, o.score.fact_id
                ));
            }
            out.extend(o.score.violations());
        }
        if let Some(MarginRatio::Defined(v)) = self.margin.as_ref().map(|m| m.ratio) {
            if !v.is_finite() {
                out.push("margin ratio is not finite".to_string());
            }
        }
        out
    }
}
