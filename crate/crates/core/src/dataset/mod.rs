//! Corpus ingestion, the run output layout and run manifests.

pub mod artifacts;
mod corpus;
mod manifest;

pub use artifacts::{
    artifact_schemas, load_truncated, persist_truncated, read_artifact, write_artifact,
    EncounterDir, FailureRecord, OutputLayout,
};
pub use corpus::{
    load_corpus, parse_tagged_dialogue, CanonicalCorpus, CanonicalEncounter, CanonicalTurn, Corpus,
    Encounter, FormatAdapter, Split,
};
pub use manifest::{run_id, EncounterEntry, EncounterStatus, RunManifest};
