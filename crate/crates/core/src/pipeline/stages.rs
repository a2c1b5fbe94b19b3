use std::fmt;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::parse::{self, Parsed, Violations};
use super::prompts::{PromptKind, PromptSet};
use crate::datamodel::{
    DdxSource, Dialogue, DifferentialDiagnosis, EvidenceClustering, Fact, Omission, Polarity,
    SourceTag, Summary,
};
use crate::error::{Error, Result};
use crate::gateway::{ChatMessage, Gateway, GenerationRequest};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Truncate,
    Summarize,
    DdxChat,
    DdxSummary,
    ExtractFacts,
    DetectOmissions,
    Categorize,
    ClusterSupporting,
    ClusterRefuting,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Truncate => "truncate",
            Self::Summarize => "summarize",
            Self::DdxChat => "ddx_chat",
            Self::DdxSummary => "ddx_summary",
            Self::ExtractFacts => "extract_facts",
            Self::DetectOmissions => "detect_omissions",
            Self::Categorize => "categorize",
            Self::ClusterSupporting => "cluster_supporting",
            Self::ClusterRefuting => "cluster_refuting",
        }
    }

    fn cluster(polarity: Polarity) -> Self {
        match polarity {
            Polarity::Supporting => Self::ClusterSupporting,
            Polarity::Refuting => Self::ClusterRefuting,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a stage produced, including the raw model text of the final attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutput<T> {
    pub stage: Stage,
    pub raw_text: String,
    pub parsed: T,
    pub attempts: u32,
    pub warnings: Vec<String>,
    pub fingerprints: Vec<String>,
}

impl<T> StageOutput<T> {
    pub fn record(&self) -> StageRecord {
        StageRecord {
            stage: self.stage,
            attempts: self.attempts,
            fingerprints: self.fingerprints.clone(),
            raw_text: self.raw_text.clone(),
            warnings: self.warnings.clone(),
        }
    }
}

/// Serializable trace of one stage, persisted alongside the parsed artifacts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct StageRecord {
    pub stage: Stage,
    pub attempts: u32,
    pub fingerprints: Vec<String>,
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Everything a stage needs to talk to a model.
#[derive(Clone, Copy)]
pub struct StageContext<'a> {
    pub gateway: &'a Gateway,
    pub prompts: &'a PromptSet,
    pub encounter_id: &'a str,
    /// Follow-up rounds allowed after the first parse failure.
    pub repair_budget: u32,
    pub max_output_tokens: u32,
    pub temperature: f64,
}

impl StageContext<'_> {
    /// Sends the prompt, parses the fenced block, and on failure sends up to
    /// `repair_budget` follow-ups quoting the violations.
    pub fn run<T>(
        &self,
        stage: Stage,
        model_id: &str,
        prompt: String,
        parse: impl Fn(&str) -> std::result::Result<Parsed<T>, Violations>,
    ) -> Result<StageOutput<T>> {
        let mut messages = vec![
            ChatMessage::system(self.prompts.template(PromptKind::System).trim_end()),
            ChatMessage::user(prompt),
        ];
        let mut fingerprints = Vec::new();
        loop {
            let request = GenerationRequest {
                model_id: model_id.to_string(),
                messages: messages.clone(),
                temperature: self.temperature,
                max_output_tokens: self.max_output_tokens,
                tag: Some(format!("{}/{}", self.encounter_id, stage)),
            };
            let fingerprint = request.fingerprint();
            fingerprints.push(fingerprint.clone());
            let attempts = fingerprints.len() as u32;
            let raw = self
                .gateway
                .generate(&request)
                .map_err(|source| Error::StageGateway {
                    stage,
                    fingerprint: fingerprint.clone(),
                    source,
                })?;
            match parse::extract_block(&raw).and_then(|block| parse(&block)) {
                Ok(parsed) => {
                    return Ok(StageOutput {
                        stage,
                        raw_text: raw,
                        parsed: parsed.value,
                        attempts,
                        warnings: parsed.warnings,
                        fingerprints,
                    })
                }
                Err(violations) if attempts > self.repair_budget => {
                    tracing::warn!(%stage, encounter = self.encounter_id, "stage failed after repair");
                    return Err(Error::Stage {
                        stage,
                        fingerprint,
                        attempts,
                        violations,
                    });
                }
                Err(violations) => {
                    tracing::debug!(%stage, ?violations, "requesting repair");
                    let listed: String = violations.iter().map(|v| format!("- {v}\n")).collect();
                    let repair = self
                        .prompts
                        .render(PromptKind::Repair, &[("violations", listed.trim_end())])?;
                    messages.push(ChatMessage::assistant(raw));
                    messages.push(ChatMessage::user(repair));
                }
            }
        }
    }
}

fn plain<T>(r: std::result::Result<T, Violations>) -> std::result::Result<Parsed<T>, Violations> {
    r.map(|value| Parsed {
        value,
        warnings: Vec::new(),
    })
}

pub fn render_facts(facts: &[Fact]) -> String {
    facts
        .iter()
        .map(|f| format!("{}: {}\n", f.fact_id, f.text))
        .collect()
}

pub fn render_ddx(ddx: &DifferentialDiagnosis) -> String {
    ddx.entries
        .iter()
        .map(|d| {
            format!(
                "{}. {} ({}): {}\n",
                d.rank, d.name, d.likelihood, d.explanation
            )
        })
        .collect()
}

/// Result of the truncation stage for one dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Truncation {
    pub encounter_id: String,
    /// Index of the last kept turn.
    pub cut_turn_index: usize,
    pub original_turns: usize,
    pub dialogue: Dialogue,
}

/// Marker for an encounter excluded because its truncated chat is too short.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct SkipMarker {
    pub encounter_id: String,
    pub reason: String,
    pub original_turns: usize,
    pub kept_turns: usize,
    pub cut_turn_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TruncationOutcome {
    Kept(Truncation, StageRecord),
    Skipped(SkipMarker, Option<StageRecord>),
}

/// Cuts the dialogue after the last turn carrying subjective information.
/// Dialogues whose kept prefix is shorter than `min_turns` are skipped.
pub fn truncate_dialogue(
    ctx: &StageContext<'_>,
    model_id: &str,
    dialogue: &Dialogue,
    min_turns: usize,
) -> Result<TruncationOutcome> {
    if dialogue.source_tag != SourceTag::Original {
        return Err(Error::Invalid(format!(
            "dialogue {} is already truncated",
            dialogue.encounter_id
        )));
    }
    let too_short = |kept: usize, cut: Option<usize>| SkipMarker {
        encounter_id: dialogue.encounter_id.clone(),
        reason: format!("truncated dialogue has {kept} turns; at least {min_turns} required"),
        original_turns: dialogue.len(),
        kept_turns: kept,
        cut_turn_index: cut,
    };
    if dialogue.len() < min_turns {
        return Ok(TruncationOutcome::Skipped(
            too_short(dialogue.len(), None),
            None,
        ));
    }
    let max_index = (dialogue.len() - 1).to_string();
    let prompt = ctx.prompts.render(
        PromptKind::Truncate,
        &[
            ("dialogue", &dialogue.render_numbered()),
            ("max_index", &max_index),
        ],
    )?;
    let n = dialogue.len();
    let out = ctx.run(Stage::Truncate, model_id, prompt, |b| {
        plain(parse::parse_truncation(b, n))
    })?;
    let cut = out.parsed;
    let record = out.record();
    if cut + 1 < min_turns {
        return Ok(TruncationOutcome::Skipped(
            too_short(cut + 1, Some(cut)),
            Some(record),
        ));
    }
    Ok(TruncationOutcome::Kept(
        Truncation {
            encounter_id: dialogue.encounter_id.clone(),
            cut_turn_index: cut,
            original_turns: n,
            dialogue: dialogue.truncated_through(cut),
        },
        record,
    ))
}

/// Zero-shot subjective note for a truncated dialogue.
pub fn generate_summary(
    ctx: &StageContext<'_>,
    model_id: &str,
    dialogue: &Dialogue,
) -> Result<StageOutput<Summary>> {
    let prompt = ctx.prompts.render(
        PromptKind::Summary,
        &[("dialogue", &dialogue.render_numbered())],
    )?;
    ctx.run(Stage::Summarize, model_id, prompt, |b| {
        parse::parse_summary(b, &dialogue.encounter_id, model_id)
    })
}

pub enum DdxContext<'a> {
    Chat(&'a Dialogue),
    Summary(&'a Summary),
}

pub fn generate_ddx(
    ctx: &StageContext<'_>,
    model_id: &str,
    context: DdxContext<'_>,
) -> Result<StageOutput<DifferentialDiagnosis>> {
    let (text, kind, title, source, stage) = match context {
        DdxContext::Chat(d) => {
            if d.is_empty() {
                return Err(Error::Invalid(
                    "differential requested for an empty dialogue".into(),
                ));
            }
            (
                d.render_numbered(),
                "doctor-patient conversation",
                "Conversation",
                DdxSource::FromChat,
                Stage::DdxChat,
            )
        }
        DdxContext::Summary(s) => {
            if s.body().trim().is_empty() {
                return Err(Error::Invalid(
                    "differential requested for an empty summary".into(),
                ));
            }
            (
                s.render(),
                "clinical note",
                "Note",
                DdxSource::FromSummary,
                Stage::DdxSummary,
            )
        }
    };
    let prompt = ctx.prompts.render(
        PromptKind::Ddx,
        &[
            ("context", &text),
            ("context_kind", kind),
            ("context_kind_title", title),
        ],
    )?;
    let encounter = ctx.encounter_id;
    ctx.run(stage, model_id, prompt, |b| {
        plain(parse::parse_ddx(b, encounter, source))
    })
}

pub fn extract_facts(
    ctx: &StageContext<'_>,
    model_id: &str,
    dialogue: &Dialogue,
) -> Result<StageOutput<Vec<Fact>>> {
    let prompt = ctx.prompts.render(
        PromptKind::ExtractFacts,
        &[("dialogue", &dialogue.render_numbered())],
    )?;
    ctx.run(Stage::ExtractFacts, model_id, prompt, |b| {
        plain(parse::parse_facts(b))
    })
}

/// Binary omission decision for every fact, made in one batched prompt.
pub fn detect_omissions(
    ctx: &StageContext<'_>,
    model_id: &str,
    facts: &[Fact],
    summary: &Summary,
) -> Result<StageOutput<Vec<Omission>>> {
    if facts.is_empty() {
        return Err(Error::Invalid(
            "omission detection needs at least one fact".into(),
        ));
    }
    let prompt = ctx.prompts.render(
        PromptKind::DetectOmissions,
        &[
            ("summary", &summary.render()),
            ("facts", &render_facts(facts)),
        ],
    )?;
    ctx.run(Stage::DetectOmissions, model_id, prompt, |b| {
        plain(parse::parse_omissions(b, facts))
    })
}

pub fn categorize_importance(
    ctx: &StageContext<'_>,
    model_id: &str,
    facts: &[Fact],
    ddx: &DifferentialDiagnosis,
) -> Result<StageOutput<Vec<Fact>>> {
    if ddx.source != DdxSource::FromChat {
        return Err(Error::Invalid(
            "importance must be categorized against the chat differential".into(),
        ));
    }
    let prompt = ctx.prompts.render(
        PromptKind::Categorize,
        &[("ddx", &render_ddx(ddx)), ("facts", &render_facts(facts))],
    )?;
    ctx.run(Stage::Categorize, model_id, prompt, |b| {
        plain(parse::parse_categorization(b, facts))
    })
}

pub fn cluster_evidence(
    ctx: &StageContext<'_>,
    model_id: &str,
    facts: &[Fact],
    ddx: &DifferentialDiagnosis,
    polarity: Polarity,
) -> Result<StageOutput<Vec<EvidenceClustering>>> {
    if ddx.entries.is_empty() {
        return Err(Error::Invalid(
            "clustering needs a non-empty differential".into(),
        ));
    }
    if ddx.source != DdxSource::FromChat {
        return Err(Error::Invalid(
            "evidence is clustered against the chat differential".into(),
        ));
    }
    let verb = match polarity {
        Polarity::Supporting => "support",
        Polarity::Refuting => "refute or argue against",
    };
    let prompt = ctx.prompts.render(
        PromptKind::Cluster,
        &[
            ("ddx", &render_ddx(ddx)),
            ("facts", &render_facts(facts)),
            ("polarity_verb", verb),
        ],
    )?;
    ctx.run(Stage::cluster(polarity), model_id, prompt, |b| {
        parse::parse_clusters(b, ddx, polarity, facts)
    })
}
