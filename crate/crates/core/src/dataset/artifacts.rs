//! Run output layout:
//!
//! ```text
//! <out>/manifest.json
//! <out>/truncated/<id>.json, skipped.json
//! <out>/encounters/<id>/dialogue.json, truncated.json, summary.json, ...
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::datamodel::{
    Dialogue, DifferentialDiagnosis, Envelope, EvidenceClustering, Fact, Omission, OmissionReport,
    Polarity, Summary,
};
use crate::error::{Error, Result};
use crate::pipeline::{EncounterArtifacts, SkipMarker, StageRecord, Truncation};

pub const DIALOGUE: &str = "dialogue";
pub const TRUNCATED: &str = "truncated";
pub const SUMMARY: &str = "summary";
pub const FACTS: &str = "facts";
pub const DDX_CHAT: &str = "ddx_chat";
pub const DDX_SUMMARY: &str = "ddx_summary";
pub const CLUSTERS_SUPPORTING: &str = "clusters_supporting";
pub const CLUSTERS_REFUTING: &str = "clusters_refuting";
pub const OMISSIONS: &str = "omissions";
pub const REPORT: &str = "report";
pub const STAGES: &str = "stages";
pub const REFERENCE_NOTE: &str = "reference_note";
pub const SKIP: &str = "skip";
pub const FAILURE: &str = "failure";

pub fn write_artifact<T: Serialize>(path: &Path, kind: &str, data: &T) -> Result<()> {
    let text = Envelope::new(kind, data).to_canonical_json()?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_artifact<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let raw = match std::fs::read_to_string(path) {
        Ok(raw) => raw,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingArtifact(path.to_path_buf()))
        }
        Err(e) => return Err(Error::io(path, e)),
    };
    Envelope::from_json(&raw, kind).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct FailureRecord {
    pub encounter_id: String,
    pub error: String,
}

/// One encounter's artifact directory.
#[derive(Debug, Clone)]
pub struct EncounterDir {
    path: PathBuf,
}

impl EncounterDir {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn file(&self, name: &str) -> PathBuf {
        self.path.join(format!("{name}.json"))
    }

    pub fn exists(&self, name: &str) -> bool {
        self.file(name).is_file()
    }

    pub fn write<T: Serialize>(&self, name: &str, data: &T) -> Result<()> {
        write_artifact(&self.file(name), name, data)
    }

    pub fn read<T: DeserializeOwned>(&self, name: &str) -> Result<T> {
        read_artifact(&self.file(name), name)
    }

    pub fn write_completed(
        &self,
        a: &EncounterArtifacts,
        reference_note: Option<&str>,
    ) -> Result<()> {
        self.write(DIALOGUE, &a.dialogue)?;
        self.write(TRUNCATED, &a.truncation)?;
        self.write(SUMMARY, &a.summary)?;
        self.write(FACTS, &a.facts)?;
        self.write(DDX_CHAT, &a.ddx_chat)?;
        if let Some(d) = &a.ddx_summary {
            self.write(DDX_SUMMARY, d)?;
        }
        self.write(CLUSTERS_SUPPORTING, &a.clusters_supporting)?;
        self.write(CLUSTERS_REFUTING, &a.clusters_refuting)?;
        self.write(OMISSIONS, &a.omissions)?;
        self.write(REPORT, &a.report)?;
        self.write(STAGES, &a.stages)?;
        if let Some(note) = reference_note {
            self.write(REFERENCE_NOTE, &note)?;
        }
        Ok(())
    }

    pub fn write_skipped(
        &self,
        dialogue: &Dialogue,
        marker: &SkipMarker,
        stages: &[StageRecord],
    ) -> Result<()> {
        self.write(DIALOGUE, dialogue)?;
        self.write(SKIP, marker)?;
        if !stages.is_empty() {
            self.write(STAGES, &stages)?;
        }
        Ok(())
    }

    pub fn write_failure(&self, dialogue: &Dialogue, error: &str) -> Result<()> {
        self.write(DIALOGUE, dialogue)?;
        self.write(
            FAILURE,
            &FailureRecord {
                encounter_id: dialogue.encounter_id.clone(),
                error: error.to_string(),
            },
        )
    }

    pub fn report(&self) -> Result<OmissionReport> {
        self.read(REPORT)
    }

    pub fn summary(&self) -> Result<Summary> {
        self.read(SUMMARY)
    }

    pub fn facts(&self) -> Result<Vec<Fact>> {
        self.read(FACTS)
    }

    pub fn omissions(&self) -> Result<Vec<Omission>> {
        self.read(OMISSIONS)
    }

    pub fn ddx_chat(&self) -> Result<DifferentialDiagnosis> {
        self.read(DDX_CHAT)
    }

    pub fn truncation(&self) -> Result<Truncation> {
        self.read(TRUNCATED)
    }

    pub fn clusters(&self, polarity: Polarity) -> Result<Vec<EvidenceClustering>> {
        match polarity {
            Polarity::Supporting => self.read(CLUSTERS_SUPPORTING),
            Polarity::Refuting => self.read(CLUSTERS_REFUTING),
        }
    }

    pub fn reference_note(&self) -> Result<Option<String>> {
        if self.exists(REFERENCE_NOTE) {
            self.read(REFERENCE_NOTE).map(Some)
        } else {
            Ok(None)
        }
    }
}

/// Paths inside a run output directory.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn truncated_dir(&self) -> PathBuf {
        self.root.join("truncated")
    }

    pub fn encounters_dir(&self) -> PathBuf {
        self.root.join("encounters")
    }

    pub fn encounter(&self, id: &str) -> EncounterDir {
        EncounterDir::new(self.encounters_dir().join(id))
    }

    /// Refuses to reuse a directory holding a previous run unless `force`,
    /// in which case only the run's own entries are removed.
    pub fn prepare(&self, force: bool) -> Result<()> {
        let owned = [
            self.manifest_path(),
            self.truncated_dir(),
            self.encounters_dir(),
        ];
        if owned.iter().any(|p| p.exists()) {
            if !force {
                return Err(Error::WouldOverwrite(self.root.clone()));
            }
            for p in &owned {
                let removed = if p.is_dir() {
                    std::fs::remove_dir_all(p)
                } else if p.exists() {
                    std::fs::remove_file(p)
                } else {
                    Ok(())
                };
                removed.map_err(|e| Error::io(p, e))?;
            }
        }
        std::fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))
    }
}

/// Writes `<dir>/<id>.json` per truncation and `<dir>/skipped.json`.
pub fn persist_truncated(
    dir: &Path,
    truncations: &[Truncation],
    skipped: &[SkipMarker],
    force: bool,
) -> Result<()> {
    let occupied = std::fs::read_dir(dir)
        .map(|mut entries| entries.next().is_some())
        .unwrap_or(false);
    if occupied {
        if !force {
            return Err(Error::WouldOverwrite(dir.to_path_buf()));
        }
        std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for t in truncations {
        write_artifact(&dir.join(format!("{}.json", t.encounter_id)), TRUNCATED, t)?;
    }
    let mut skipped = skipped.to_vec();
    skipped.sort_by(|a, b| a.encounter_id.cmp(&b.encounter_id));
    write_artifact(&dir.join("skipped.json"), "skipped", &skipped)
}

pub fn load_truncated(dir: &Path) -> Result<(Vec<Truncation>, Vec<SkipMarker>)> {
    let skipped: Vec<SkipMarker> = read_artifact(&dir.join("skipped.json"), "skipped")?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    paths.sort();
    let truncations = paths
        .iter()
        .filter(|p| p.file_name().is_some_and(|n| n != "skipped.json"))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .map(|p| read_artifact(p, TRUNCATED))
        .collect::<Result<_>>()?;
    Ok((truncations, skipped))
}

/// JSON Schema of every artifact kind, wrapped in its envelope.
pub fn artifact_schemas() -> BTreeMap<&'static str, schemars::schema::RootSchema> {
    use crate::dataset::RunManifest;
    use schemars::schema_for;
    BTreeMap::from([
        (DIALOGUE, schema_for!(Envelope<Dialogue>)),
        (TRUNCATED, schema_for!(Envelope<Truncation>)),
        (SUMMARY, schema_for!(Envelope<Summary>)),
        (FACTS, schema_for!(Envelope<Vec<Fact>>)),
        (DDX_CHAT, schema_for!(Envelope<DifferentialDiagnosis>)),
        (DDX_SUMMARY, schema_for!(Envelope<DifferentialDiagnosis>)),
        (
            CLUSTERS_SUPPORTING,
            schema_for!(Envelope<Vec<EvidenceClustering>>),
        ),
        (
            CLUSTERS_REFUTING,
            schema_for!(Envelope<Vec<EvidenceClustering>>),
        ),
        (OMISSIONS, schema_for!(Envelope<Vec<Omission>>)),
        (REPORT, schema_for!(Envelope<OmissionReport>)),
        (STAGES, schema_for!(Envelope<Vec<StageRecord>>)),
        (REFERENCE_NOTE, schema_for!(Envelope<String>)),
        (SKIP, schema_for!(Envelope<SkipMarker>)),
        (FAILURE, schema_for!(Envelope<FailureRecord>)),
        ("manifest", schema_for!(Envelope<RunManifest>)),
    ])
}
