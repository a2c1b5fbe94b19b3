use std::collections::BTreeSet;
use std::path::Path;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Dialogue, Speaker};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Self::Train),
            "test" => Ok(Self::Test),
            other => Err(format!("unknown split {other:?} (train, test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encounter {
    pub dialogue: Dialogue,
    pub reference_note: Option<String>,
    /// Sub-collection the encounter came from, when the source records it.
    pub subset: Option<String>,
}

impl Encounter {
    pub fn id(&self) -> &str {
        &self.dialogue.encounter_id
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub name: String,
    pub split: Split,
    pub encounters: Vec<Encounter>,
}

/// On-disk corpus layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatAdapter {
    /// The crate's own JSON layout, see [`CanonicalCorpus`].
    CanonicalJson,
    /// CSV with columns `dataset, encounter_id, dialogue, note`; dialogue
    /// turns start with a `[speaker]` tag.
    AciCsv,
}

impl FormatAdapter {
    pub fn for_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Ok(Self::CanonicalJson),
            Some("csv") => Ok(Self::AciCsv),
            _ => Err(Error::Corpus(format!(
                "cannot infer corpus format of {} (expected .json or .csv)",
                path.display()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct CanonicalTurn {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct CanonicalEncounter {
    pub encounter_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<String>,
    pub turns: Vec<CanonicalTurn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct CanonicalCorpus {
    pub name: String,
    pub split: Split,
    pub encounters: Vec<CanonicalEncounter>,
}

impl From<&Corpus> for CanonicalCorpus {
    fn from(c: &Corpus) -> Self {
        Self {
            name: c.name.clone(),
            split: c.split,
            encounters: c
                .encounters
                .iter()
                .map(|e| CanonicalEncounter {
                    encounter_id: e.id().to_string(),
                    subset: e.subset.clone(),
                    turns: e
                        .dialogue
                        .turns
                        .iter()
                        .map(|t| CanonicalTurn {
                            speaker: t.speaker,
                            text: t.text.clone(),
                        })
                        .collect(),
                    reference_note: e.reference_note.clone(),
                })
                .collect(),
        }
    }
}

impl From<CanonicalCorpus> for Corpus {
    fn from(c: CanonicalCorpus) -> Self {
        Self {
            name: c.name,
            split: c.split,
            encounters: c
                .encounters
                .into_iter()
                .map(|e| Encounter {
                    dialogue: Dialogue::from_turns(
                        e.encounter_id,
                        e.turns.into_iter().map(|t| (t.speaker, t.text)),
                    ),
                    reference_note: e.reference_note,
                    subset: e.subset,
                })
                .collect(),
        }
    }
}

/// Ids become directory names, so they are restricted to a safe alphabet.
fn id_violation(id: &str) -> Option<String> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    (!ok).then(|| {
        format!(
            "encounter id {id:?} must be non-empty and use only letters, digits, '-', '_' or '.'"
        )
    })
}

impl Corpus {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for e in &self.encounters {
            let id = e.id();
            if let Some(v) = id_violation(id) {
                return Err(Error::Corpus(v));
            }
            if !seen.insert(id) {
                return Err(Error::Corpus(format!("duplicate encounter id {id}")));
            }
            if e.dialogue.is_empty() {
                return Err(Error::Corpus(format!(
                    "encounter {id} has an empty dialogue"
                )));
            }
            let violations = e.dialogue.violations();
            if !violations.is_empty() {
                return Err(Error::Corpus(format!(
                    "encounter {id}: {}",
                    violations.join("; ")
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Encounter> {
        self.encounters.iter().find(|e| e.id() == id)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.encounters.iter().map(Encounter::id).collect()
    }

    pub fn to_canonical_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&CanonicalCorpus::from(self))?;
        s.push('\n');
        Ok(s)
    }
}

pub fn load_corpus(path: impl AsRef<Path>, adapter: FormatAdapter, split: Split) -> Result<Corpus> {
    let path = path.as_ref();
    let corpus = match adapter {
        FormatAdapter::CanonicalJson => {
            let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let parsed: CanonicalCorpus = serde_json::from_str(&raw)
                .map_err(|e| Error::Corpus(format!("{}: {e}", path.display())))?;
            Corpus::from(parsed)
        }
        FormatAdapter::AciCsv => load_aci_csv(path, split)?,
    };
    corpus.validate()?;
    Ok(corpus)
}

#[derive(Debug, Deserialize)]
struct AciRow {
    #[serde(default)]
    dataset: Option<String>,
    encounter_id: String,
    dialogue: String,
    #[serde(default)]
    note: Option<String>,
}

/// Splits `[doctor] ... [patient] ...` text into turns. Lines without a tag
/// continue the previous turn.
pub fn parse_tagged_dialogue(text: &str) -> Vec<(Speaker, String)> {
    let mut turns: Vec<(Speaker, String)> = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let tagged = line
            .strip_prefix('[')
            .and_then(|rest| rest.split_once(']'))
            .map(|(tag, body)| (Speaker::from_tag(tag), body.trim().to_string()));
        match (tagged, turns.last_mut()) {
            (Some(turn), _) => turns.push(turn),
            (None, Some((_, prev))) => {
                prev.push(' ');
                prev.push_str(line);
            }
            (None, None) => turns.push((Speaker::Other, line.to_string())),
        }
    }
    turns
}

fn load_aci_csv(path: &Path, split: Split) -> Result<Corpus> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Corpus(format!("{}: {e}", path.display())))?;
    let mut encounters = Vec::new();
    for row in reader.deserialize::<AciRow>() {
        let row = row.map_err(|e| Error::Corpus(format!("{}: {e}", path.display())))?;
        encounters.push(Encounter {
            dialogue: Dialogue::from_turns(row.encounter_id, parse_tagged_dialogue(&row.dialogue)),
            reference_note: row.note.filter(|n| !n.trim().is_empty()),
            subset: row.dataset.filter(|d| !d.trim().is_empty()),
        });
    }
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("corpus")
        .to_string();
    Ok(Corpus {
        name,
        split,
        encounters,
    })
}
