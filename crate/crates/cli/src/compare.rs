use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use omission_core::baselines::{
    correlation_table, import_external_metric, misalignment_error, rouge_f1_all, CorrelationTable,
    MetricVector, Tokenizer, MARGIN, OMISSION_COUNT, OMISSION_WEIGHT,
};
use omission_core::dataset::{EncounterStatus, OutputLayout};
use omission_core::pipeline::{load_reports, read_manifest};

/// Omission metrics and ROUGE F1 against the stored reference notes, one
/// vector per metric. Encounters without a reference note are left out of
/// the ROUGE vectors, which then fail the alignment check.
pub fn run_metrics(out: &Path, tokenizer: Tokenizer) -> Result<Vec<MetricVector>> {
    let layout = OutputLayout::new(out);
    let manifest = read_manifest(&layout)?;
    let reports = load_reports(&layout, &manifest)?;
    let mut count = MetricVector::new(OMISSION_COUNT);
    let mut weight = MetricVector::new(OMISSION_WEIGHT);
    let mut margin = MetricVector::new(MARGIN);
    let mut rouge: Vec<MetricVector> = Vec::new();
    let mut any_reference = false;
    for report in &reports {
        let id = report.encounter_id.clone();
        count
            .values
            .insert(id.clone(), report.omission_count as f64);
        weight.values.insert(id.clone(), report.cumulative_weight);
        if let Some(v) = report.margin.as_ref().and_then(|m| m.ratio.value()) {
            margin.values.insert(id.clone(), v);
        }
        let dir = layout.encounter(&id);
        let Some(note) = dir.reference_note()? else {
            continue;
        };
        any_reference = true;
        let summary = dir.summary()?;
        let scores = rouge_f1_all(&summary.render(), &note, tokenizer)
            .with_context(|| format!("ROUGE for {id}"))?;
        for (i, (name, f1)) in scores.into_iter().enumerate() {
            if rouge.len() <= i {
                rouge.push(MetricVector::new(name));
            }
            rouge[i].values.insert(id.clone(), f1);
        }
    }
    let mut out_vecs = vec![count, weight];
    if !margin.values.is_empty() {
        out_vecs.push(margin);
    }
    if any_reference {
        out_vecs.extend(rouge);
    }
    Ok(out_vecs)
}

fn parse_metric_arg(raw: &str) -> Result<(String, PathBuf)> {
    let (name, path) = raw
        .split_once('=')
        .ok_or_else(|| anyhow!("--metric-csv expects NAME=PATH, got {raw:?}"))?;
    if name.is_empty() || path.is_empty() {
        bail!("--metric-csv expects NAME=PATH, got {raw:?}");
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

fn ok_ids(out: &Path) -> Result<BTreeSet<String>> {
    let manifest = read_manifest(&OutputLayout::new(out))?;
    Ok(manifest
        .encounters
        .into_iter()
        .filter(|e| e.status == EncounterStatus::Ok)
        .map(|e| e.encounter_id)
        .collect())
}

pub fn compare(
    outs: &[PathBuf],
    metric_csvs: &[String],
    tokenizer: Tokenizer,
) -> Result<Vec<(PathBuf, CorrelationTable)>> {
    let external: Vec<MetricVector> = metric_csvs
        .iter()
        .map(|raw| {
            let (name, path) = parse_metric_arg(raw)?;
            Ok(import_external_metric(&path, &name)?)
        })
        .collect::<Result<_>>()?;

    // Every run must cover the same completed encounters.
    let first_ids = ok_ids(&outs[0])?;
    for other in &outs[1..] {
        let ids = ok_ids(other)?;
        if ids != first_ids {
            let a: BTreeSet<&str> = first_ids.iter().map(String::as_str).collect();
            let b: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
            return Err(misalignment_error(
                &outs[0].display().to_string(),
                &a,
                &other.display().to_string(),
                &b,
            )
            .into());
        }
    }

    let mut tables = Vec::new();
    for out in outs {
        let mut metrics = run_metrics(out, tokenizer)?;
        metrics.extend(external.iter().cloned());
        let table =
            correlation_table(&metrics).with_context(|| format!("run {}", out.display()))?;
        tables.push((out.clone(), table));
    }
    Ok(tables)
}

pub fn cmd_compare(outs: &[PathBuf], metric_csvs: &[String], stem: bool, json: bool) -> Result<u8> {
    let tables = compare(outs, metric_csvs, Tokenizer { stem })?;
    if json {
        let value: Vec<_> = tables
            .iter()
            .map(|(out, t)| serde_json::json!({ "run": out.display().to_string(), "rows": t.rows }))
            .collect();
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else {
        for (out, table) in &tables {
            println!("run {}", out.display());
            print!("{}", table.render_text());
        }
    }
    Ok(super::EXIT_OK)
}
