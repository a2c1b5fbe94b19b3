//! Stage orchestration: truncation, generation, fact extraction, omission
//! detection, categorization and clustering, followed by scoring.

mod encounter;
pub mod parse;
mod prompts;
mod runner;
mod stages;

pub use encounter::{
    run_encounter, EncounterArtifacts, EncounterOutcome, ModelRoles, PipelineConfig,
};
pub use prompts::{PromptKind, PromptSet, PROMPT_SET_VERSION};
pub use runner::{
    load_reports, read_manifest, rescore, run_corpus, MeanSd, RunOptions, RunStats, MANIFEST,
};
pub use stages::{
    categorize_importance, cluster_evidence, detect_omissions, extract_facts, generate_ddx,
    generate_summary, render_ddx, render_facts, truncate_dialogue, DdxContext, SkipMarker, Stage,
    StageContext, StageOutput, StageRecord, Truncation, TruncationOutcome,
};
