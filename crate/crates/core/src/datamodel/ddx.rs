use std::collections::BTreeSet;
use std::fmt;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::facts::normalize_label;

/// Upper bound on differential length.
pub const MAX_DIAGNOSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    Probable,
    Possible,
    Unlikely,
}

impl Likelihood {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Probable => "probable",
            Self::Possible => "possible",
            Self::Unlikely => "unlikely",
        }
    }

    /// Closed vocabulary: anything else is rejected.
    pub fn parse_label(raw: &str) -> Option<Self> {
        match normalize_label(raw).as_str() {
            "probable" => Some(Self::Probable),
            "possible" => Some(Self::Possible),
            "unlikely" => Some(Self::Unlikely),
            _ => None,
        }
    }
}

impl fmt::Display for Likelihood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Diagnosis {
    pub rank: u32,
    pub name: String,
    pub likelihood: Likelihood,
    pub explanation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum DdxSource {
    FromChat,
    FromSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct DifferentialDiagnosis {
    pub encounter_id: String,
    pub source: DdxSource,
    pub entries: Vec<Diagnosis>,
}

impl DifferentialDiagnosis {
    pub fn top(&self) -> Option<&Diagnosis> {
        self.entries.first()
    }

    /// First entry in rank order whose likelihood is not `probable`.
    pub fn top_non_probable(&self) -> Option<&Diagnosis> {
        self.entries
            .iter()
            .find(|d| d.likelihood != Likelihood::Probable)
    }

    /// Case-insensitive lookup by diagnosis name.
    pub fn find(&self, name: &str) -> Option<&Diagnosis> {
        let key = name_key(name);
        self.entries.iter().find(|d| name_key(&d.name) == key)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.entries.is_empty() {
            out.push("differential diagnosis is empty".to_string());
        }
        if self.entries.len() > MAX_DIAGNOSES {
            out.push(format!(
                "differential diagnosis has {} entries; at most {MAX_DIAGNOSES} allowed",
                self.entries.len()
            ));
        }
        let mut ranks = BTreeSet::new();
        let mut names = BTreeSet::new();
        for pair in self.entries.windows(2) {
            if pair[0].rank >= pair[1].rank {
                out.push(format!(
                    "diagnosis ranks not strictly ascending at {} -> {}",
                    pair[0].rank, pair[1].rank
                ));
            }
        }
        for d in &self.entries {
            if d.rank == 0 {
                out.push(format!("diagnosis {:?} has rank 0", d.name));
            }
            if !ranks.insert(d.rank) {
                out.push(format!("duplicate diagnosis rank {}", d.rank));
            }
            if d.name.trim().is_empty() {
                out.push(format!("diagnosis at rank {} has an empty name", d.rank));
            }
            if !names.insert(name_key(&d.name)) {
                out.push(format!("duplicate diagnosis name {:?}", d.name));
            }
        }
        out
    }
}

/// Comparison key for diagnosis names: lowercase with collapsed whitespace.
pub fn name_key(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_matches(|c: char| c == '*' || c == '"')
        .to_lowercase()
}
