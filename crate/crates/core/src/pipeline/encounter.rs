use std::thread;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::prompts::PromptSet;
use super::stages::{
    self, DdxContext, SkipMarker, StageContext, StageRecord, Truncation, TruncationOutcome,
};
use crate::datamodel::{
    bundle_warnings, validate_encounter_bundle, Dialogue, DifferentialDiagnosis,
    EvidenceClustering, Fact, Omission, OmissionReport, Polarity, Summary,
};
use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::scoring::{self, MarginOptions, UniquenessScope, DEFAULT_MARGIN_EPSILON};

/// Model ids for each role. The metric model handles truncation, facts,
/// omissions, categorization, differentials and clustering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ModelRoles {
    pub summary: String,
    pub metric: String,
    /// Completion-margin scoring is off when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub models: ModelRoles,
    pub prompts: PromptSet,
    pub min_truncated_turns: usize,
    pub repair_budget: u32,
    pub max_output_tokens: u32,
    pub temperature: f64,
    pub uniqueness_scope: UniquenessScope,
    pub margin_prompt_phrase: String,
    pub margin_epsilon: f64,
}

impl PipelineConfig {
    pub fn new(models: ModelRoles) -> Self {
        Self {
            models,
            prompts: PromptSet::default(),
            min_truncated_turns: 6,
            repair_budget: 1,
            max_output_tokens: 2048,
            temperature: 0.0,
            uniqueness_scope: UniquenessScope::default(),
            margin_prompt_phrase: "The patient most likely has".into(),
            margin_epsilon: DEFAULT_MARGIN_EPSILON,
        }
    }

    fn context<'a>(&'a self, gateway: &'a Gateway, encounter_id: &'a str) -> StageContext<'a> {
        StageContext {
            gateway,
            prompts: &self.prompts,
            encounter_id,
            repair_budget: self.repair_budget,
            max_output_tokens: self.max_output_tokens,
            temperature: self.temperature,
        }
    }
}

/// All artifacts of one completed encounter.
#[derive(Debug, Clone, PartialEq)]
pub struct EncounterArtifacts {
    pub dialogue: Dialogue,
    pub truncation: Truncation,
    pub summary: Summary,
    /// Facts with importance assigned.
    pub facts: Vec<Fact>,
    pub ddx_chat: DifferentialDiagnosis,
    pub ddx_summary: Option<DifferentialDiagnosis>,
    pub clusters_supporting: Vec<EvidenceClustering>,
    pub clusters_refuting: Vec<EvidenceClustering>,
    pub omissions: Vec<Omission>,
    pub report: OmissionReport,
    pub stages: Vec<StageRecord>,
}

impl EncounterArtifacts {
    pub fn clusterings(&self) -> Vec<EvidenceClustering> {
        self.clusters_supporting
            .iter()
            .chain(&self.clusters_refuting)
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncounterOutcome {
    Completed(Box<EncounterArtifacts>),
    Skipped {
        marker: SkipMarker,
        stages: Vec<StageRecord>,
    },
}

fn join<T>(h: thread::ScopedJoinHandle<'_, T>) -> T {
    h.join().unwrap_or_else(|p| std::panic::resume_unwind(p))
}

/// Runs every stage for one dialogue and scores the result.
pub fn run_encounter(
    dialogue: &Dialogue,
    gateway: &Gateway,
    config: &PipelineConfig,
) -> Result<EncounterOutcome> {
    let id = dialogue.encounter_id.as_str();
    let ctx = config.context(gateway, id);
    let metric = config.models.metric.as_str();

    let truncation =
        match stages::truncate_dialogue(&ctx, metric, dialogue, config.min_truncated_turns)? {
            TruncationOutcome::Kept(t, record) => (t, record),
            TruncationOutcome::Skipped(marker, record) => {
                tracing::info!(encounter = id, reason = %marker.reason, "skipping encounter");
                return Ok(EncounterOutcome::Skipped {
                    marker,
                    stages: record.into_iter().collect(),
                });
            }
        };
    let (truncation, truncate_record) = truncation;
    let chat = &truncation.dialogue;
    let mut records = vec![truncate_record];

    let (summary, facts, ddx_chat) = thread::scope(|s| {
        let summary = s.spawn(|| stages::generate_summary(&ctx, &config.models.summary, chat));
        let facts = s.spawn(|| stages::extract_facts(&ctx, metric, chat));
        let ddx = s.spawn(|| stages::generate_ddx(&ctx, metric, DdxContext::Chat(chat)));
        (join(summary), join(facts), join(ddx))
    });
    let (summary, facts, ddx_chat) = (summary?, facts?, ddx_chat?);
    records.extend([summary.record(), facts.record(), ddx_chat.record()]);
    let (summary, raw_facts, ddx_chat) = (summary.parsed, facts.parsed, ddx_chat.parsed);

    let (omissions, categorized, supporting, refuting, ddx_summary) = thread::scope(|s| {
        let omissions = s.spawn(|| stages::detect_omissions(&ctx, metric, &raw_facts, &summary));
        let categorized =
            s.spawn(|| stages::categorize_importance(&ctx, metric, &raw_facts, &ddx_chat));
        let supporting = s.spawn(|| {
            stages::cluster_evidence(&ctx, metric, &raw_facts, &ddx_chat, Polarity::Supporting)
        });
        let refuting = s.spawn(|| {
            stages::cluster_evidence(&ctx, metric, &raw_facts, &ddx_chat, Polarity::Refuting)
        });
        let ddx_summary =
            config.models.margin.as_ref().map(|_| {
                s.spawn(|| stages::generate_ddx(&ctx, metric, DdxContext::Summary(&summary)))
            });
        (
            join(omissions),
            join(categorized),
            join(supporting),
            join(refuting),
            ddx_summary.map(join),
        )
    });
    let (omissions, categorized, supporting, refuting) =
        (omissions?, categorized?, supporting?, refuting?);
    let ddx_summary = ddx_summary.transpose()?;
    records.extend([
        omissions.record(),
        categorized.record(),
        supporting.record(),
        refuting.record(),
    ]);
    if let Some(d) = &ddx_summary {
        records.push(d.record());
    }
    records.sort_by_key(|r| r.stage);

    let facts = categorized.parsed;
    let omissions = omissions.parsed;
    let clusters_supporting = supporting.parsed;
    let clusters_refuting = refuting.parsed;
    let ddx_summary = ddx_summary.map(|d| d.parsed);
    let clusterings: Vec<EvidenceClustering> = clusters_supporting
        .iter()
        .chain(&clusters_refuting)
        .cloned()
        .collect();

    let violations = validate_encounter_bundle(chat, &facts, &clusterings, &omissions);
    if !violations.is_empty() {
        return Err(Error::Invalid(format!(
            "encounter {id}: {}",
            violations.join("; ")
        )));
    }

    let margin = match (&config.models.margin, &ddx_summary) {
        (Some(model), Some(summary_ddx)) => {
            let options = MarginOptions {
                model_id: model.clone(),
                prompt_phrase: config.margin_prompt_phrase.clone(),
                epsilon: config.margin_epsilon,
            };
            Some(scoring::completion_margin(
                &chat.render_plain(),
                &summary.render(),
                &ddx_chat,
                summary_ddx,
                gateway,
                &options,
                id,
            )?)
        }
        _ => None,
    };

    let mut report = scoring::build_report(
        id,
        &facts,
        &clusterings,
        &omissions,
        margin,
        config.uniqueness_scope,
    )?;
    report.warnings = records
        .iter()
        .flat_map(|r| r.warnings.iter().map(move |w| format!("{}: {w}", r.stage)))
        .chain(bundle_warnings(&clusterings))
        .collect();
    for w in &report.warnings {
        tracing::warn!(encounter = id, "{w}");
    }

    Ok(EncounterOutcome::Completed(Box::new(EncounterArtifacts {
        dialogue: dialogue.clone(),
        truncation,
        summary,
        facts,
        ddx_chat,
        ddx_summary,
        clusters_supporting,
        clusters_refuting,
        omissions,
        report,
        stages: records,
    })))
}
