//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Oracles are independent of the library code under test.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, RngAlgorithm, TestRng, TestRunner};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use omission_core::baselines::{
    pearson, rouge_l, rouge_lsum, rouge_n, spearman, RougeScore, Tokenizer,
};
use omission_core::config::Config;
use omission_core::datamodel::{
    DdxSource, Diagnosis, DifferentialDiagnosis, EvidenceClustering, EvidenceGroup, Fact, FactId,
    Importance, Likelihood, MarginRatio, Omission, Polarity, SubCluster,
};
use omission_core::dataset::OutputLayout;
use omission_core::gateway::{Gateway, MockBackend, MockScript, Mode};
use omission_core::pipeline::{run_corpus, RunOptions, TruncationOutcome};
use omission_core::scoring::{
    completion_margin, document_score, margin_ratio, score_facts, MarginOptions, UniquenessScope,
    Weight,
};
use omission_core::Error;

use common::*;

type Checked = Result<String, String>;
type Criterion = (&'static str, fn() -> Checked);

const ROUGE_TOLERANCE: f64 = 1e-6;
const CORRELATION_TOLERANCE: f64 = 1e-9;
const ORACLE_CASES: u32 = 1000;

fn main() {
    let criteria: [Criterion; 9] = [
        ("scoring golden files", scoring_golden),
        ("scoring oracle equivalence", scoring_oracle),
        ("weight bounds property", weight_bounds),
        ("completion margin", completion_margin_cases),
        ("ROUGE parity", rouge_parity),
        ("correlation parity", correlation_parity),
        ("end-to-end determinism", e2e_determinism),
        ("parser robustness", parser_robustness),
        ("truncation protocol", truncation_protocol),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_message(&p))));
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown panic".into())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn parse_ratio(s: &str) -> Ratio<i128> {
    match s.split_once('/') {
        Some((n, d)) => Ratio::new(n.trim().parse().unwrap(), d.trim().parse().unwrap()),
        None => Ratio::from_integer(s.trim().parse().unwrap()),
    }
}

// Scoring golden files

#[derive(Deserialize)]
struct GoldenExpected {
    count: usize,
    weight: String,
    scores: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct Golden {
    encounter_id: String,
    facts: Vec<Fact>,
    clusterings: Vec<EvidenceClustering>,
    omissions: Vec<Omission>,
    expected: GoldenExpected,
}

fn scoring_golden() -> Checked {
    let start = Instant::now();
    let mut lines = Vec::new();
    for file in [
        "scoring/figure1.json",
        "scoring/figure4.json",
        "scoring/edward.json",
    ] {
        let g: Golden = load_json(file);
        let scored = score_facts(&g.facts, &g.clusterings, UniquenessScope::AllPolarities)
            .map_err(|e| format!("{file}: {e}"))?;
        let exact: BTreeMap<FactId, Weight> = scored.iter().map(|(k, (_, w))| (*k, *w)).collect();
        for (id, want) in &g.expected.scores {
            let id: FactId = id.parse().unwrap();
            let got = exact[&id].ratio();
            ensure(got == parse_ratio(want), || {
                format!("{}: {id} scored {got}, expected {want}", g.encounter_id)
            })?;
        }
        let (count, weight) = document_score(&g.omissions, &exact).map_err(|e| e.to_string())?;
        let want = parse_ratio(&g.expected.weight);
        ensure(count == g.expected.count && weight.ratio() == want, || {
            format!(
                "{}: got ({count}, {}), expected ({}, {want})",
                g.encounter_id,
                weight.ratio(),
                g.expected.count
            )
        })?;
        lines.push(format!("{} ({count}, {})", g.encounter_id, weight.to_f64()));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || {
        format!("took {elapsed:?}, limit 1 s")
    })?;
    Ok(format!("{} in {elapsed:.1?}", lines.join(", ")))
}

// Randomized scoring instances

#[derive(Debug, Clone)]
struct Instance {
    tiers: Vec<Importance>,
    clusterings: Vec<EvidenceClustering>,
    omitted: Vec<bool>,
    scope: UniquenessScope,
}

impl Instance {
    fn facts(&self) -> Vec<Fact> {
        self.tiers
            .iter()
            .enumerate()
            .map(|(i, t)| {
                Fact::new(
                    i as u32,
                    format!("fact {i}"),
                    omission_core::datamodel::ContentCategory::Medical,
                )
                .with_importance(*t)
            })
            .collect()
    }

    fn omissions(&self, omitted: &[bool]) -> Vec<Omission> {
        omitted
            .iter()
            .enumerate()
            .filter(|(_, o)| **o)
            .map(|(i, _)| Omission {
                fact_id: FactId(i as u32),
                explanation: "missing".into(),
            })
            .collect()
    }
}

fn instance_strategy() -> impl Strategy<Value = Instance> {
    let tier = prop_oneof![
        Just(Importance::Critical),
        Just(Importance::Important),
        Just(Importance::Other)
    ];
    let scope = prop_oneof![
        Just(UniquenessScope::AllPolarities),
        Just(UniquenessScope::SupportingOnly)
    ];
    (1usize..=8).prop_flat_map(move |n| {
        let mask = 1u32..(1u32 << n);
        let clustering = (0usize..3, any::<bool>(), prop::collection::vec(mask, 0..=4)).prop_map(
            |(dx, supporting, masks)| {
                let subclusters = masks
                    .iter()
                    .enumerate()
                    .map(|(k, m)| SubCluster {
                        group: EvidenceGroup::ALL[k % EvidenceGroup::ALL.len()],
                        mechanism_label: format!("mechanism {k}"),
                        fact_ids: (0..8).filter(|b| m & (1 << b) != 0).map(FactId).collect(),
                    })
                    .collect();
                let polarity = if supporting {
                    Polarity::Supporting
                } else {
                    Polarity::Refuting
                };
                EvidenceClustering::new(format!("diagnosis {dx}"), polarity, subclusters)
            },
        );
        (
            prop::collection::vec(tier.clone(), n),
            prop::collection::vec(clustering, 0..=6),
            prop::collection::vec(any::<bool>(), n),
            scope.clone(),
        )
            .prop_map(|(tiers, clusterings, omitted, scope)| Instance {
                tiers,
                clusterings,
                omitted,
                scope,
            })
    })
}

fn runner() -> TestRunner {
    let config = PropConfig {
        cases: ORACLE_CASES,
        failure_persistence: None,
        ..PropConfig::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn tier_value(t: Importance) -> Ratio<i128> {
    match t {
        Importance::Critical => Ratio::from_integer(1),
        Importance::Important => Ratio::new(1, 2),
        Importance::Other => Ratio::new(1, 10),
    }
}

/// Walks every attainable score from the top down and keeps the first one
/// the fact actually reaches through its tier or some admitted sub-cluster.
fn brute_force(inst: &Instance, omitted: &[bool]) -> (usize, Ratio<i128>) {
    let mut lattice: Vec<Ratio<i128>> = (1..=8).map(|k| Ratio::new(1, k)).collect();
    lattice.push(Ratio::new(1, 10));
    lattice.sort_by(|a, b| b.cmp(a));
    lattice.dedup();
    let mut count = 0;
    let mut total = Ratio::from_integer(0);
    for (f, _) in omitted.iter().enumerate().filter(|(_, o)| **o) {
        count += 1;
        let id = FactId(f as u32);
        let reaches = |v: Ratio<i128>| {
            tier_value(inst.tiers[f]) == v
                || inst.clusterings.iter().any(|c| {
                    let admitted = inst.scope == UniquenessScope::AllPolarities
                        || c.polarity == Polarity::Supporting;
                    admitted
                        && c.subclusters.iter().any(|s| {
                            let mut members = 0i128;
                            let mut has = false;
                            for m in &s.fact_ids {
                                members += 1;
                                has |= *m == id;
                            }
                            has && Ratio::new(1, members) == v
                        })
                })
        };
        let best = lattice
            .iter()
            .copied()
            .find(|v| reaches(*v))
            .expect("tier always reachable");
        total += best;
    }
    (count, total)
}

fn library_score(inst: &Instance, omitted: &[bool]) -> (usize, Ratio<i128>) {
    let scored = score_facts(&inst.facts(), &inst.clusterings, inst.scope).expect("score_facts");
    let exact: BTreeMap<FactId, Weight> = scored.iter().map(|(k, (_, w))| (*k, *w)).collect();
    let (count, w) = document_score(&inst.omissions(omitted), &exact).expect("document_score");
    (count, w.ratio())
}

fn scoring_oracle() -> Checked {
    let start = Instant::now();
    runner()
        .run(&instance_strategy(), |inst| {
            let lib = library_score(&inst, &inst.omitted);
            let oracle = brute_force(&inst, &inst.omitted);
            prop_assert_eq!(lib, oracle);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || {
        format!("took {elapsed:?}, limit 10 s")
    })?;
    Ok(format!(
        "{ORACLE_CASES} instances identical to brute force in {elapsed:.1?}"
    ))
}

fn weight_bounds() -> Checked {
    runner()
        .run(&instance_strategy(), |inst| {
            let (count, w) = library_score(&inst, &inst.omitted);
            let c = Ratio::from_integer(count as i128);
            prop_assert!(
                Ratio::new(1, 10) * c <= w && w <= c,
                "count {} weight {}",
                count,
                w
            );
            for extra in (0..inst.omitted.len()).filter(|i| !inst.omitted[*i]) {
                let mut more = inst.omitted.clone();
                more[extra] = true;
                let (_, w2) = library_score(&inst, &more);
                prop_assert!(w2 >= w, "adding F{} lowered weight {} -> {}", extra, w, w2);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "{ORACLE_CASES} instances within [0.1 count, count] and monotone"
    ))
}

// Completion margin

#[derive(Deserialize)]
struct MarginCase {
    name: String,
    chat_ddx: Vec<(String, String)>,
    summary_ddx: Vec<(String, String)>,
    scores: BTreeMap<String, Vec<f64>>,
    expected: serde_json::Value,
}

#[derive(Deserialize)]
struct MarginCases {
    cases: Vec<MarginCase>,
}

fn ddx(entries: &[(String, String)], source: DdxSource) -> DifferentialDiagnosis {
    DifferentialDiagnosis {
        encounter_id: "margin".into(),
        source,
        entries: entries
            .iter()
            .enumerate()
            .map(|(i, (name, l))| Diagnosis {
                rank: i as u32 + 1,
                name: name.clone(),
                likelihood: Likelihood::parse_label(l).expect("likelihood"),
                explanation: String::new(),
            })
            .collect(),
    }
}

fn completion_margin_cases() -> Checked {
    let fixture: MarginCases = load_json("margin/cases.json");
    let mut script = MockScript {
        supports_logprobs: true,
        ..MockScript::default()
    };
    for (i, case) in fixture.cases.iter().enumerate() {
        for (slot, lp) in &case.scores {
            script
                .score
                .insert(format!("case{i}/margin/{slot}"), lp.clone());
        }
    }
    let gateway = Gateway::single(Arc::new(MockBackend::new(script)));
    let options = MarginOptions::new(MODEL);
    let mut seen = Vec::new();
    for (i, case) in fixture.cases.iter().enumerate() {
        let m = completion_margin(
            "Doctor: what brings you in?",
            "CHIEF COMPLAINT: fatigue.",
            &ddx(&case.chat_ddx, DdxSource::FromChat),
            &ddx(&case.summary_ddx, DdxSource::FromSummary),
            &gateway,
            &options,
            &format!("case{i}"),
        )
        .map_err(|e| format!("{}: {e}", case.name))?;
        let got = serde_json::to_value(m.ratio).unwrap();
        ensure(got == case.expected, || {
            format!("{}: got {got}, expected {}", case.name, case.expected)
        })?;
        if let MarginRatio::Defined(v) = m.ratio {
            ensure(v.is_finite(), || format!("{}: non-finite ratio", case.name))?;
        }
        seen.push(match m.ratio {
            MarginRatio::Defined(v) => v.to_string(),
            MarginRatio::Undefined(_) => "undefined".into(),
        });
    }
    // Tiny and zero denominators never leak a non-finite value.
    runner()
        .run(
            &(
                -50.0f64..0.0,
                -50.0f64..0.0,
                -50.0f64..0.0,
                prop_oneof![Just(0.0), -1e-9f64..1e-9, -1e-300f64..1e-300],
            ),
            |(c0, c1, s0, gap)| {
                let r = margin_ratio(c0, Some(c1), s0, Some(s0 - gap), 1e-9);
                match r {
                    MarginRatio::Defined(v) => prop_assert!(v.is_finite()),
                    MarginRatio::Undefined(_) => {}
                }
                Ok(())
            },
        )
        .map_err(|e| e.to_string())?;
    Ok(format!("ratios {} and epsilon guard", seen.join(", ")))
}

// ROUGE

#[derive(Deserialize)]
struct PrfOracle {
    precision: f64,
    recall: f64,
    f1: f64,
}

#[derive(Deserialize)]
struct RougeCase {
    candidate: String,
    reference: String,
    scores: BTreeMap<String, PrfOracle>,
}

#[derive(Deserialize)]
struct RougeCases {
    cases: Vec<RougeCase>,
}

fn rouge_parity() -> Checked {
    let fixture: RougeCases = load_json("oracles/rouge_cases.json");
    let tok = Tokenizer { stem: false };
    let mut worst = 0.0f64;
    for (i, case) in fixture.cases.iter().enumerate() {
        let (c, r) = (case.candidate.as_str(), case.reference.as_str());
        let ours: [(&str, RougeScore); 4] = [
            ("rouge1", rouge_n(c, r, 1, tok).map_err(|e| e.to_string())?),
            ("rouge2", rouge_n(c, r, 2, tok).map_err(|e| e.to_string())?),
            ("rougeL", rouge_l(c, r, tok).map_err(|e| e.to_string())?),
            (
                "rougeLsum",
                rouge_lsum(c, r, tok).map_err(|e| e.to_string())?,
            ),
        ];
        for (name, s) in ours {
            let o = &case.scores[name];
            for (what, a, b) in [
                ("precision", s.precision, o.precision),
                ("recall", s.recall, o.recall),
                ("f1", s.f1, o.f1),
            ] {
                let d = (a - b).abs();
                worst = worst.max(d);
                ensure(d <= ROUGE_TOLERANCE, || {
                    format!("case {i} {name} {what}: {a} vs oracle {b}")
                })?;
            }
        }
    }
    Ok(format!(
        "{} pairs, max |diff| {worst:.1e} (tolerance {ROUGE_TOLERANCE:.0e})",
        fixture.cases.len()
    ))
}

// Correlation

#[derive(Deserialize)]
struct CorrOracle {
    coefficient: f64,
    p_value: f64,
}

#[derive(Deserialize)]
struct CorrCase {
    x: Vec<f64>,
    y: Vec<f64>,
    spearman: CorrOracle,
    pearson: CorrOracle,
}

#[derive(Deserialize)]
struct CorrCases {
    cases: Vec<CorrCase>,
}

fn correlation_parity() -> Checked {
    let fixture: CorrCases = load_json("oracles/correlation_cases.json");
    let mut worst = 0.0f64;
    let mut tied = 0;
    for (i, case) in fixture.cases.iter().enumerate() {
        let distinct = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<BTreeSet<_>>().len();
        if distinct(&case.x) < case.x.len() || distinct(&case.y) < case.y.len() {
            tied += 1;
        }
        let s = spearman(&case.x, &case.y).map_err(|e| format!("case {i}: {e}"))?;
        let p = pearson(&case.x, &case.y).map_err(|e| format!("case {i}: {e}"))?;
        for (what, a, b) in [
            ("spearman", s.coefficient, case.spearman.coefficient),
            ("spearman p", s.p_value, case.spearman.p_value),
            ("pearson", p.coefficient, case.pearson.coefficient),
            ("pearson p", p.p_value, case.pearson.p_value),
        ] {
            let d = (a - b).abs();
            worst = worst.max(d);
            ensure(d <= CORRELATION_TOLERANCE, || {
                format!("case {i} {what}: {a} vs oracle {b}")
            })?;
        }
    }
    ensure(tied > 0, || "fixture has no tied-rank case".into())?;
    Ok(format!(
        "{} vectors ({tied} with ties), max |diff| {worst:.1e} (tolerance {CORRELATION_TOLERANCE:.0e})",
        fixture.cases.len()
    ))
}

// End-to-end

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn replay_e2e(out: &Path, workers: usize) -> Result<(), String> {
    let config = Config::load(fixture("e2e/config.toml")).map_err(|e| e.to_string())?;
    let gateway = config
        .build_gateway(Mode::Replay, None)
        .map_err(|e| e.to_string())?;
    let pipeline = config.pipeline_config().map_err(|e| e.to_string())?;
    let corpus = load_fixture_corpus("e2e/corpus.json");
    let options = RunOptions {
        workers,
        force: false,
        only: None,
        mode_label: "replay".into(),
        cassette_label: config
            .gateway
            .cassette
            .as_ref()
            .map(|p| p.display().to_string()),
        config_snapshot: config.snapshot(),
        timestamps: false,
    };
    let manifest = run_corpus(
        &corpus,
        &gateway,
        &pipeline,
        &OutputLayout::new(out),
        &options,
        &AtomicBool::new(false),
    )
    .map_err(|e| e.to_string())?;
    ensure(
        manifest.encounters.iter().all(|e| e.detail.is_none()),
        || format!("not all encounters completed: {:?}", manifest.encounters),
    )
}

fn digest_lines(t: &BTreeMap<String, Vec<u8>>) -> String {
    t.iter()
        .map(|(path, bytes)| {
            let hex: String = Sha256::digest(bytes)
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect();
            format!("{hex}  {path}\n")
        })
        .collect()
}

fn e2e_determinism() -> Checked {
    let dir = tempfile::tempdir().unwrap();
    let (a, b): (PathBuf, PathBuf) = (dir.path().join("a"), dir.path().join("b"));
    replay_e2e(&a, 1)?;
    replay_e2e(&b, 4)?;
    let (ta, tb) = (tree(&a), tree(&b));
    if ta != tb {
        let differing: Vec<&String> = ta
            .keys()
            .chain(tb.keys())
            .filter(|k| ta.get(*k) != tb.get(*k))
            .collect();
        return Err(format!("runs differ in {differing:?}"));
    }
    let root = dir.path().to_string_lossy().into_owned();
    if let Some((path, _)) = ta
        .iter()
        .find(|(_, bytes)| String::from_utf8_lossy(bytes).contains(&root))
    {
        return Err(format!("{path} embeds the output path"));
    }
    // Digests committed from another machine pin the bytes across hosts.
    let digests = digest_lines(&ta);
    let expected_path = fixture("e2e/expected_digests.txt");
    if std::env::var_os("OMISSION_REGENERATE_FIXTURES").is_some() {
        std::fs::write(&expected_path, &digests).unwrap();
    }
    let expected = std::fs::read_to_string(&expected_path)
        .map_err(|e| format!("{}: {e}", expected_path.display()))?;
    if digests != expected {
        let want: BTreeSet<&str> = expected.lines().collect();
        let stale: Vec<&str> = digests
            .lines()
            .filter(|l| !want.contains(l))
            .map(|l| &l[66..])
            .collect();
        return Err(format!(
            "artifacts differ from expected_digests.txt: {stale:?}"
        ));
    }
    Ok(format!(
        "{} files byte-identical across 2 runs and match committed digests",
        ta.len()
    ))
}

// Parser robustness

fn parser_robustness() -> Checked {
    let cassette_text = std::fs::read_to_string(fixture("malformed/cassette.jsonl")).unwrap();
    let gateway = replay_gateway("malformed/cassette.jsonl");
    let mut done = Vec::new();
    for (case, result) in drive_malformed(&gateway) {
        let id = &case.encounter_id;
        let recorded = cassette_text
            .lines()
            .filter(|l| l.contains(&format!("\"tag\":\"{id}/")))
            .count();
        ensure(recorded == 2, || {
            format!("{id}: cassette holds {recorded} requests, expected 2")
        })?;
        match result {
            Err(Error::Stage {
                stage,
                attempts,
                violations,
                fingerprint,
            }) => {
                ensure(stage.as_str() == case.stage, || {
                    format!("{id}: failed in {stage}, expected {}", case.stage)
                })?;
                ensure(attempts == 2, || {
                    format!("{id}: {attempts} attempts, expected 2")
                })?;
                ensure(
                    violations.iter().any(|v| v.contains(&case.violation)),
                    || format!("{id}: violations {violations:?} lack {:?}", case.violation),
                )?;
                ensure(cassette_text.contains(&fingerprint), || {
                    format!("{id}: terminal fingerprint not on tape")
                })?;
            }
            Err(other) => return Err(format!("{id}: unexpected error {other}")),
            Ok(n) => return Err(format!("{id}: parsed after {n} attempt(s)")),
        }
        done.push(id.trim_start_matches("mf-").to_string());
    }
    Ok(format!(
        "{} each failed after one repair round",
        done.join(", ")
    ))
}

// Truncation

fn truncation_protocol() -> Checked {
    let ann = truncation_annotations();
    let gateway = replay_gateway("truncation/cassette.jsonl");
    let mut matched = 0;
    let mut misses = Vec::new();
    let mut guards = 0;
    for (id, outcome) in drive_truncation(&gateway) {
        let outcome = outcome.map_err(|e| format!("{id}: {e}"))?;
        if let Some(want) = ann.cuts.get(&id) {
            match outcome {
                TruncationOutcome::Kept(t, _) if t.cut_turn_index == *want => matched += 1,
                TruncationOutcome::Kept(t, _) => misses.push(format!(
                    "{id}: model {} vs annotated {want}",
                    t.cut_turn_index
                )),
                TruncationOutcome::Skipped(m, _) => {
                    return Err(format!("{id}: unexpectedly skipped ({})", m.reason))
                }
            }
        } else if let Some(g) = ann.guard.get(&id) {
            match outcome {
                TruncationOutcome::Skipped(m, record) => {
                    ensure(
                        m.kept_turns == g.kept_turns && m.cut_turn_index == g.cut_turn_index,
                        || {
                            format!(
                                "{id}: skip marker kept {} cut {:?}, expected {} {:?}",
                                m.kept_turns, m.cut_turn_index, g.kept_turns, g.cut_turn_index
                            )
                        },
                    )?;
                    ensure(m.kept_turns < MIN_TURNS, || {
                        format!("{id}: skipped with {} turns", m.kept_turns)
                    })?;
                    // Dialogues already below the minimum never reach the model.
                    ensure(record.is_some() == g.cut_turn_index.is_some(), || {
                        format!("{id}: unexpected model call record")
                    })?;
                    guards += 1;
                }
                TruncationOutcome::Kept(..) => {
                    return Err(format!("{id}: kept despite the {MIN_TURNS}-turn guard"))
                }
            }
        }
    }
    let total = ann.cuts.len();
    ensure(matched >= 4, || {
        format!("{matched}/{total} cuts match; {}", misses.join("; "))
    })?;
    ensure(guards == ann.guard.len(), || {
        format!("{guards}/{} guard cases observed", ann.guard.len())
    })?;
    let miss = if misses.is_empty() {
        String::new()
    } else {
        format!(" ({})", misses.join("; "))
    };
    Ok(format!(
        "{matched}/{total} cuts match{miss}; {guards} guard skips"
    ))
}
