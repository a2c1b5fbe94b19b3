use std::collections::BTreeMap;
use std::fmt;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Doctor,
    Patient,
    Other,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Doctor => "doctor",
            Self::Patient => "patient",
            Self::Other => "other",
        }
    }

    /// Maps corpus speaker tags (`doctor`, `patient`, `patient_guest`, `nurse`, ...)
    /// onto the closed speaker set.
    pub fn from_tag(tag: &str) -> Self {
        match tag.trim().to_ascii_lowercase().as_str() {
            "doctor" | "dr" | "physician" | "provider" | "clinician" => Self::Doctor,
            "patient" | "pt" => Self::Patient,
            _ => Self::Other,
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Turn {
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    Original,
    Truncated,
}

/// A speaker-tagged patient/provider conversation for one encounter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Dialogue {
    pub encounter_id: String,
    pub turns: Vec<Turn>,
    pub source_tag: SourceTag,
}

impl Dialogue {
    /// Builds an original dialogue, assigning contiguous turn indices.
    pub fn from_turns(
        encounter_id: impl Into<String>,
        turns: impl IntoIterator<Item = (Speaker, String)>,
    ) -> Self {
        Self {
            encounter_id: encounter_id.into(),
            turns: turns
                .into_iter()
                .enumerate()
                .map(|(index, (speaker, text))| Turn {
                    index,
                    speaker,
                    text,
                })
                .collect(),
            source_tag: SourceTag::Original,
        }
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// Prefix of the dialogue ending at `last_index` inclusive, tagged as truncated.
    pub fn truncated_through(&self, last_index: usize) -> Dialogue {
        Dialogue {
            encounter_id: self.encounter_id.clone(),
            turns: self.turns[..=last_index.min(self.turns.len().saturating_sub(1))].to_vec(),
            source_tag: SourceTag::Truncated,
        }
    }

    /// One line per turn, `[index] SPEAKER: text`. This is the form every
    /// prompt sees.
    pub fn render_numbered(&self) -> String {
        let mut out = String::new();
        for turn in &self.turns {
            out.push_str(&format!(
                "[{}] {}: {}\n",
                turn.index,
                turn.speaker.as_str().to_ascii_uppercase(),
                turn.text.trim()
            ));
        }
        out
    }

    /// Plain transcript (`SPEAKER: text` per line), used as a completion prefix.
    pub fn render_plain(&self) -> String {
        let mut out = String::new();
        for turn in &self.turns {
            out.push_str(&format!(
                "{}: {}\n",
                turn.speaker.as_str().to_ascii_uppercase(),
                turn.text.trim()
            ));
        }
        out
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.encounter_id.trim().is_empty() {
            out.push("dialogue has an empty encounter id".to_string());
        }
        if self.turns.is_empty() {
            out.push(format!("dialogue {} has no turns", self.encounter_id));
        }
        for (expected, turn) in self.turns.iter().enumerate() {
            if turn.index != expected {
                out.push(format!(
                    "dialogue {} turn at position {expected} has index {}",
                    self.encounter_id, turn.index
                ));
            }
            if turn.text.trim().is_empty() {
                out.push(format!(
                    "dialogue {} turn {} has empty text",
                    self.encounter_id, turn.index
                ));
            }
        }
        out
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum SummarySection {
    ChiefComplaint,
    HistoryOfPresentIllness,
    PastSocialHistory,
}

impl SummarySection {
    pub const ALL: [SummarySection; 3] = [
        Self::ChiefComplaint,
        Self::HistoryOfPresentIllness,
        Self::PastSocialHistory,
    ];

    pub fn heading(self) -> &'static str {
        match self {
            Self::ChiefComplaint => "CHIEF COMPLAINT",
            Self::HistoryOfPresentIllness => "HISTORY OF PRESENT ILLNESS",
            Self::PastSocialHistory => "PAST SOCIAL HISTORY",
        }
    }

    /// Recognizes a section heading, including the common abbreviations.
    pub fn from_heading(raw: &str) -> Option<Self> {
        let norm: String = raw
            .trim()
            .trim_matches(|c: char| c == '*' || c == '#')
            .trim()
            .to_ascii_lowercase()
            .split(|c: char| !c.is_ascii_alphanumeric())
            .filter(|w| !w.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        match norm.as_str() {
            "chief complaint" | "cc" | "chief complaint cc" => Some(Self::ChiefComplaint),
            "history of present illness" | "hpi" | "history of present illness hpi" => {
                Some(Self::HistoryOfPresentIllness)
            }
            "past social history"
            | "psh"
            | "past social history psh"
            | "past medical and social history"
            | "past medical history"
            | "past medical history pmh"
            | "social history" => Some(Self::PastSocialHistory),
            _ => None,
        }
    }
}

/// A generated subjective note, split into its sections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Summary {
    pub encounter_id: String,
    pub sections: BTreeMap<SummarySection, String>,
    pub generator_tag: String,
}

impl Summary {
    /// Sections in heading order, joined with blank lines.
    pub fn render(&self) -> String {
        SummarySection::ALL
            .iter()
            .filter_map(|s| self.sections.get(s).map(|text| (s, text)))
            .map(|(s, text)| format!("{}: {}", s.heading(), text.trim()))
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Section text only, one section per line; used as the reference-free
    /// candidate for ROUGE and as a completion prefix.
    pub fn body(&self) -> String {
        SummarySection::ALL
            .iter()
            .filter_map(|s| self.sections.get(s))
            .map(|t| t.trim())
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn empty_sections(&self) -> Vec<SummarySection> {
        SummarySection::ALL
            .into_iter()
            .filter(|s| self.sections.get(s).is_none_or(|t| t.trim().is_empty()))
            .collect()
    }

    pub fn violations(&self) -> Vec<String> {
        if self.sections.values().all(|t| t.trim().is_empty()) {
            vec![format!(
                "summary for {} has no non-empty section",
                self.encounter_id
            )]
        } else {
            Vec::new()
        }
    }
}
