//! Fixture loading and the scripted-stage drivers shared by the acceptance
//! suite and the cassette freshness test.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use omission_core::datamodel::{ContentCategory, Fact, Summary, SummarySection};
use omission_core::dataset::{load_corpus, Corpus, FormatAdapter, Split};
use omission_core::gateway::{Cassette, Gateway, MockBackend, MockScript, Mode};
use omission_core::pipeline::{
    detect_omissions, extract_facts, generate_ddx, truncate_dialogue, DdxContext, PromptSet,
    StageContext, TruncationOutcome,
};

pub const MODEL: &str = "fixture-model";
pub const MIN_TURNS: usize = 6;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

pub fn load_json<T: DeserializeOwned>(rel: &str) -> T {
    let path = fixture(rel);
    let raw = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&raw).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn load_fixture_corpus(rel: &str) -> Corpus {
    let path = fixture(rel);
    load_corpus(&path, FormatAdapter::CanonicalJson, Split::Test).expect("fixture corpus")
}

/// Mock backend behind a cassette that records every response.
pub fn recording_gateway(script_rel: &str, cassette: &Path) -> Gateway {
    let script = MockScript::load(fixture(script_rel)).expect("mock script");
    Gateway::builder(Mode::Record)
        .backend(
            "mock",
            Arc::new(MockBackend::new(script)),
            4,
            Duration::ZERO,
        )
        .route("*", "mock")
        .cassette(Cassette::open_for_append(cassette).expect("cassette"))
        .build()
        .expect("record gateway")
}

/// Cassette-only gateway; any request not on tape is an error.
pub fn replay_gateway(cassette_rel: &str) -> Gateway {
    Gateway::builder(Mode::Replay)
        .cassette(Cassette::open(fixture(cassette_rel)).expect("cassette"))
        .build()
        .expect("replay gateway")
}

pub fn context<'a>(
    gateway: &'a Gateway,
    prompts: &'a PromptSet,
    encounter_id: &'a str,
) -> StageContext<'a> {
    StageContext {
        gateway,
        prompts,
        encounter_id,
        repair_budget: 1,
        max_output_tokens: 1024,
        temperature: 0.0,
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct MalformedCase {
    pub encounter_id: String,
    pub stage: String,
    pub violation: String,
}

pub fn malformed_cases() -> Vec<MalformedCase> {
    load_json("malformed/cases.json")
}

fn cough_facts() -> Vec<Fact> {
    [
        "The patient has had a cough for three weeks",
        "The cough is mostly dry",
        "The patient has no fevers",
        "The patient quit smoking five years ago",
    ]
    .iter()
    .enumerate()
    .map(|(i, t)| Fact::new(i as u32, *t, ContentCategory::Medical))
    .collect()
}

fn cough_summary(encounter_id: &str) -> Summary {
    Summary {
        encounter_id: encounter_id.into(),
        sections: BTreeMap::from([
            (
                SummarySection::ChiefComplaint,
                "Cough for three weeks.".to_string(),
            ),
            (
                SummarySection::HistoryOfPresentIllness,
                "The patient reports a cough without fevers.".to_string(),
            ),
            (
                SummarySection::PastSocialHistory,
                "Former smoker.".to_string(),
            ),
        ]),
        generator_tag: MODEL.into(),
    }
}

/// Runs the stage each malformation case targets; `Ok` carries the attempt count.
pub fn drive_malformed(gateway: &Gateway) -> Vec<(MalformedCase, omission_core::Result<u32>)> {
    let corpus = load_fixture_corpus("truncation/dialogues.json");
    let dialogue = &corpus.get("tr-01").expect("tr-01").dialogue;
    let prompts = PromptSet::default();
    malformed_cases()
        .into_iter()
        .map(|case| {
            let ctx = context(gateway, &prompts, &case.encounter_id);
            let result = match case.stage.as_str() {
                "extract_facts" => extract_facts(&ctx, MODEL, dialogue).map(|o| o.attempts),
                "ddx_chat" => {
                    generate_ddx(&ctx, MODEL, DdxContext::Chat(dialogue)).map(|o| o.attempts)
                }
                "detect_omissions" => detect_omissions(
                    &ctx,
                    MODEL,
                    &cough_facts(),
                    &cough_summary(&case.encounter_id),
                )
                .map(|o| o.attempts),
                other => panic!("no driver for stage {other}"),
            };
            (case, result)
        })
        .collect()
}

#[derive(Debug, Clone, Deserialize)]
pub struct GuardExpectation {
    pub kept_turns: usize,
    pub cut_turn_index: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TruncationAnnotations {
    pub cuts: BTreeMap<String, usize>,
    pub guard: BTreeMap<String, GuardExpectation>,
}

pub fn truncation_annotations() -> TruncationAnnotations {
    load_json("truncation/annotations.json")
}

pub fn drive_truncation(
    gateway: &Gateway,
) -> Vec<(String, omission_core::Result<TruncationOutcome>)> {
    let corpus = load_fixture_corpus("truncation/dialogues.json");
    let prompts = PromptSet::default();
    corpus
        .encounters
        .iter()
        .map(|enc| {
            let id = enc.id().to_string();
            let ctx = context(gateway, &prompts, &id);
            let outcome = truncate_dialogue(&ctx, MODEL, &enc.dialogue, MIN_TURNS);
            (id, outcome)
        })
        .collect()
}
