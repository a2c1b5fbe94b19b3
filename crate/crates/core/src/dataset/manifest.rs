use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::corpus::Corpus;
use crate::error::{Error, Result};
use crate::pipeline::ModelRoles;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum EncounterStatus {
    Ok,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct EncounterEntry {
    pub encounter_id: String,
    pub status: EncounterStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RunManifest {
    pub run_id: String,
    pub corpus: String,
    pub split: super::corpus::Split,
    pub mode: String,
    pub models: ModelRoles,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cassette: Option<String>,
    /// Resolved configuration the run used.
    pub config: serde_json::Value,
    pub encounters: Vec<EncounterEntry>,
    /// Unix seconds; left out in replay mode so replays are byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<u64>,
}

/// Stable id from the configuration snapshot, mode and corpus encounter ids.
pub fn run_id(config: &serde_json::Value, mode: &str, corpus: &Corpus) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config).unwrap_or_default());
    h.update([0]);
    h.update(mode.as_bytes());
    h.update([0]);
    h.update(corpus.name.as_bytes());
    for id in corpus.ids() {
        h.update([0]);
        h.update(id.as_bytes());
    }
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn count(&self, status: EncounterStatus) -> usize {
        self.encounters
            .iter()
            .filter(|e| e.status == status)
            .count()
    }

    /// Every corpus encounter must appear exactly once.
    pub fn check_partition(&self, corpus: &Corpus) -> Result<()> {
        let mut listed: Vec<&str> = self
            .encounters
            .iter()
            .map(|e| e.encounter_id.as_str())
            .collect();
        let mut expected = corpus.ids();
        listed.sort_unstable();
        expected.sort_unstable();
        if listed != expected {
            return Err(Error::Invalid(format!(
                "manifest lists {} encounters for a corpus of {}",
                listed.len(),
                expected.len()
            )));
        }
        Ok(())
    }
}
