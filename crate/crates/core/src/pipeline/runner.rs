use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encounter::{run_encounter, EncounterOutcome, PipelineConfig};
use super::stages::{SkipMarker, Truncation};
use crate::datamodel::{OmissionReport, Polarity};
use crate::dataset::{
    persist_truncated, run_id, write_artifact, Corpus, EncounterDir, EncounterEntry,
    EncounterStatus, OutputLayout, RunManifest,
};
use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::scoring::{build_report, UniquenessScope};

pub const MANIFEST: &str = "manifest";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    pub force: bool,
    /// Restrict the run to these encounters; the rest are marked skipped.
    pub only: Option<Vec<String>>,
    pub mode_label: String,
    pub cassette_label: Option<String>,
    pub config_snapshot: serde_json::Value,
    pub timestamps: bool,
}

fn now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

enum Done {
    Ok(Truncation),
    Skipped(Option<SkipMarker>, String),
    Failed(String),
}

/// Runs every encounter of `corpus` on a pool of `options.workers` threads
/// and writes the output layout. Once `cancel` is set, encounters not yet
/// started are marked skipped; running ones finish.
pub fn run_corpus(
    corpus: &Corpus,
    gateway: &Gateway,
    config: &PipelineConfig,
    layout: &OutputLayout,
    options: &RunOptions,
    cancel: &AtomicBool,
) -> Result<RunManifest> {
    if let Some(only) = &options.only {
        for id in only {
            if corpus.get(id).is_none() {
                return Err(Error::Corpus(format!(
                    "encounter {id} is not in the corpus"
                )));
            }
        }
    }
    layout.prepare(options.force)?;
    let started_at = options.timestamps.then(now);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let results: Vec<Result<Done>> = pool.install(|| {
        corpus
            .encounters
            .par_iter()
            .map(|enc| {
                let id = enc.id();
                let selected = options
                    .only
                    .as_ref()
                    .is_none_or(|o| o.iter().any(|x| x == id));
                if !selected {
                    return Ok(Done::Skipped(None, "not selected".into()));
                }
                if cancel.load(Ordering::SeqCst) {
                    return Ok(Done::Skipped(None, "cancelled".into()));
                }
                let dir = layout.encounter(id);
                tracing::info!(encounter = id, "running");
                match run_encounter(&enc.dialogue, gateway, config) {
                    Ok(EncounterOutcome::Completed(a)) => {
                        dir.write_completed(&a, enc.reference_note.as_deref())?;
                        Ok(Done::Ok(a.truncation))
                    }
                    Ok(EncounterOutcome::Skipped { marker, stages }) => {
                        dir.write_skipped(&enc.dialogue, &marker, &stages)?;
                        let reason = marker.reason.clone();
                        Ok(Done::Skipped(Some(marker), reason))
                    }
                    Err(e) => {
                        tracing::error!(encounter = id, error = %e, "encounter failed");
                        dir.write_failure(&enc.dialogue, &e.to_string())?;
                        Ok(Done::Failed(e.to_string()))
                    }
                }
            })
            .collect()
    });

    let mut truncations = Vec::new();
    let mut skips = Vec::new();
    let mut entries = Vec::new();
    for (enc, result) in corpus.encounters.iter().zip(results) {
        let (status, detail) = match result? {
            Done::Ok(t) => {
                truncations.push(t);
                (EncounterStatus::Ok, None)
            }
            Done::Skipped(marker, reason) => {
                skips.extend(marker);
                (EncounterStatus::Skipped, Some(reason))
            }
            Done::Failed(e) => (EncounterStatus::Failed, Some(e)),
        };
        entries.push(EncounterEntry {
            encounter_id: enc.id().to_string(),
            status,
            subset: enc.subset.clone(),
            detail,
        });
    }
    persist_truncated(&layout.truncated_dir(), &truncations, &skips, options.force)?;

    let manifest = RunManifest {
        run_id: run_id(&options.config_snapshot, &options.mode_label, corpus),
        corpus: corpus.name.clone(),
        split: corpus.split,
        mode: options.mode_label.clone(),
        models: config.models.clone(),
        cassette: options.cassette_label.clone(),
        config: options.config_snapshot.clone(),
        encounters: entries,
        started_at,
        finished_at: options.timestamps.then(now),
    };
    manifest.check_partition(corpus)?;
    write_artifact(&layout.manifest_path(), MANIFEST, &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(layout: &OutputLayout) -> Result<RunManifest> {
    crate::dataset::read_artifact(&layout.manifest_path(), MANIFEST)
}

/// Recomputes a report from an encounter's stored facts, clusterings and
/// omissions, keeping the stored margin.
pub fn rescore(dir: &EncounterDir, scope: UniquenessScope) -> Result<OmissionReport> {
    let previous = dir.report()?;
    let facts = dir.facts()?;
    let mut clusterings = dir.clusters(Polarity::Supporting)?;
    clusterings.extend(dir.clusters(Polarity::Refuting)?);
    let omissions = dir.omissions()?;
    let mut report = build_report(
        &previous.encounter_id,
        &facts,
        &clusterings,
        &omissions,
        previous.margin.clone(),
        scope,
    )?;
    report.warnings = previous.warnings;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; zero when n < 2.
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(Self { n, mean, sd })
    }
}

/// Corpus-level summary: omission count, cumulative weight and (defined)
/// completion margin ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub ok: usize,
    pub skipped: usize,
    pub failed: usize,
    pub count: Option<MeanSd>,
    pub weight: Option<MeanSd>,
    pub margin: Option<MeanSd>,
    pub margin_undefined: usize,
}

impl RunStats {
    pub fn from_reports(manifest: &RunManifest, reports: &[OmissionReport]) -> Self {
        let counts: Vec<f64> = reports.iter().map(|r| r.omission_count as f64).collect();
        let weights: Vec<f64> = reports.iter().map(|r| r.cumulative_weight).collect();
        let margins: Vec<Option<f64>> = reports
            .iter()
            .filter_map(|r| r.margin.as_ref())
            .map(|m| m.ratio.value())
            .collect();
        let defined: Vec<f64> = margins.iter().flatten().copied().collect();
        Self {
            ok: manifest.count(EncounterStatus::Ok),
            skipped: manifest.count(EncounterStatus::Skipped),
            failed: manifest.count(EncounterStatus::Failed),
            count: MeanSd::of(&counts),
            weight: MeanSd::of(&weights),
            margin: MeanSd::of(&defined),
            margin_undefined: margins.len() - defined.len(),
        }
    }

    pub fn render_text(&self) -> String {
        let line = |name: &str, m: &Option<MeanSd>| match m {
            Some(m) => format!(
                "{name:<8} mean {:.3}  sd {:.3}  (n={})\n",
                m.mean, m.sd, m.n
            ),
            None => format!("{name:<8} n/a\n"),
        };
        let mut out = format!(
            "encounters: {} ok, {} skipped, {} failed\n",
            self.ok, self.skipped, self.failed
        );
        out.push_str(&line("count", &self.count));
        out.push_str(&line("weight", &self.weight));
        out.push_str(&line("margin", &self.margin));
        if self.margin_undefined > 0 {
            out.push_str(&format!(
                "margin undefined for {} encounter(s)\n",
                self.margin_undefined
            ));
        }
        out
    }
}

/// Reports of every encounter the manifest marks ok.
pub fn load_reports(layout: &OutputLayout, manifest: &RunManifest) -> Result<Vec<OmissionReport>> {
    manifest
        .encounters
        .iter()
        .filter(|e| e.status == EncounterStatus::Ok)
        .map(|e| layout.encounter(&e.encounter_id).report())
        .collect()
}
