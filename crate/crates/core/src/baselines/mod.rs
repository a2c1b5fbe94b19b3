//! Reference-based baselines and their correlation with omission metrics.

mod correlation;
mod rouge;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use correlation::{average_ranks, pearson, spearman, Correlation};
pub use rouge::{
    rouge_f1_all, rouge_l, rouge_lsum, rouge_n, split_sentences, RougeScore, Tokenizer,
};

pub const OMISSION_COUNT: &str = "omission_count";
pub const OMISSION_WEIGHT: &str = "omission_weight";
pub const MARGIN: &str = "margin";
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Metrics produced by this pipeline, as opposed to baselines.
pub fn is_omission_metric(name: &str) -> bool {
    matches!(name, OMISSION_COUNT | OMISSION_WEIGHT | MARGIN)
}

/// One value per encounter for a named metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub metric_name: String,
    pub values: BTreeMap<String, f64>,
}

impl MetricVector {
    pub fn new(metric_name: impl Into<String>) -> Self {
        Self {
            metric_name: metric_name.into(),
            values: BTreeMap::new(),
        }
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.values.keys().map(String::as_str).collect()
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.values.is_empty())
            .then(|| self.values.values().sum::<f64>() / self.values.len() as f64)
    }

    /// Ids in `expected` with no value here.
    pub fn missing_from<'a>(&self, expected: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        expected
            .into_iter()
            .filter(|id| !self.values.contains_key(*id))
            .map(str::to_string)
            .collect()
    }
}

#[derive(Debug, Deserialize)]
struct MetricRow {
    encounter_id: String,
    value: String,
}

/// Reads a CSV with header `encounter_id,value`.
pub fn import_external_metric(path: impl AsRef<Path>, metric_name: &str) -> Result<MetricVector> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Corpus(format!("{}: {e}", path.display())))?;
    let mut out = MetricVector::new(metric_name);
    for (line, row) in reader.deserialize::<MetricRow>().enumerate() {
        let row = row.map_err(|e| Error::Corpus(format!("{}: {e}", path.display())))?;
        let value: f64 = row.value.parse().map_err(|_| {
            Error::Corpus(format!(
                "{} row {}: value {:?} is not a number",
                path.display(),
                line + 1,
                row.value
            ))
        })?;
        if !value.is_finite() {
            return Err(Error::Corpus(format!(
                "{} row {}: non-finite value for {}",
                path.display(),
                line + 1,
                row.encounter_id
            )));
        }
        if out.values.insert(row.encounter_id.clone(), value).is_some() {
            return Err(Error::Corpus(format!(
                "{}: duplicate encounter_id {}",
                path.display(),
                row.encounter_id
            )));
        }
    }
    Ok(out)
}

/// Error listing ids present in only one of the two sets.
pub fn misalignment_error(
    a_name: &str,
    a: &BTreeSet<&str>,
    b_name: &str,
    b: &BTreeSet<&str>,
) -> Error {
    let only_a: Vec<&str> = a.difference(b).copied().collect();
    let only_b: Vec<&str> = b.difference(a).copied().collect();
    Error::Correlation(format!(
        "encounter sets differ: only in {a_name}: [{}]; only in {b_name}: [{}]",
        only_a.join(", "),
        only_b.join(", ")
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub baseline: String,
    pub baseline_mean: f64,
    pub omission_metric: String,
    pub n: usize,
    pub spearman: Correlation,
    pub pearson: Correlation,
    pub spearman_significant: bool,
    pub pearson_significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub rows: Vec<CorrelationRow>,
}

/// Correlates every baseline with every omission metric. Non-margin vectors
/// must cover the same encounters; margin pairs drop encounters whose margin
/// is undefined.
pub fn correlation_table(metrics: &[MetricVector]) -> Result<CorrelationTable> {
    if metrics.len() < 2 {
        return Err(Error::Correlation(format!(
            "need at least 2 metric vectors, got {}",
            metrics.len()
        )));
    }
    let (targets, baselines): (Vec<&MetricVector>, Vec<&MetricVector>) = metrics
        .iter()
        .partition(|m| is_omission_metric(&m.metric_name));
    if targets.is_empty() || baselines.is_empty() {
        return Err(Error::Correlation(
            "need at least one omission metric and one baseline".into(),
        ));
    }
    let complete: Vec<&MetricVector> = metrics.iter().filter(|m| m.metric_name != MARGIN).collect();
    if let Some(first) = complete.first() {
        let ids = first.ids();
        for other in &complete[1..] {
            let other_ids = other.ids();
            if other_ids != ids {
                return Err(misalignment_error(
                    &first.metric_name,
                    &ids,
                    &other.metric_name,
                    &other_ids,
                ));
            }
        }
    }

    let mut rows = Vec::new();
    for baseline in &baselines {
        for target in &targets {
            let paired: Vec<(f64, f64)> = target
                .values
                .iter()
                .filter_map(|(id, t)| baseline.values.get(id).map(|b| (*b, *t)))
                .collect();
            let (b, t): (Vec<f64>, Vec<f64>) = paired.into_iter().unzip();
            let context = |e: Error| {
                Error::Correlation(format!(
                    "{} vs {}: {e}",
                    baseline.metric_name, target.metric_name
                ))
            };
            let s = spearman(&b, &t).map_err(context)?;
            let p = pearson(&b, &t).map_err(context)?;
            rows.push(CorrelationRow {
                baseline: baseline.metric_name.clone(),
                baseline_mean: baseline.mean().unwrap_or(f64::NAN),
                omission_metric: target.metric_name.clone(),
                n: b.len(),
                spearman_significant: s.p_value < SIGNIFICANCE_LEVEL,
                pearson_significant: p.p_value < SIGNIFICANCE_LEVEL,
                spearman: s,
                pearson: p,
            });
        }
    }
    Ok(CorrelationTable { rows })
}

impl CorrelationTable {
    /// Aligned plain-text rendering; `*` marks p < 0.05.
    pub fn render_text(&self) -> String {
        let header = [
            "baseline", "mean", "vs", "n", "spearman", "p", "pearson", "p",
        ];
        let body: Vec<[String; 8]> = self
            .rows
            .iter()
            .map(|r| {
                let star = |s: bool| if s { "*" } else { "" };
                [
                    r.baseline.clone(),
                    format!("{:.3}", r.baseline_mean),
                    r.omission_metric.clone(),
                    r.n.to_string(),
                    format!(
                        "{:.3}{}",
                        r.spearman.coefficient,
                        star(r.spearman_significant)
                    ),
                    format!("{:.4}", r.spearman.p_value),
                    format!(
                        "{:.3}{}",
                        r.pearson.coefficient,
                        star(r.pearson_significant)
                    ),
                    format!("{:.4}", r.pearson.p_value),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: Vec<&str>| {
            let parts: Vec<String> = cells
                .iter()
                .zip(widths)
                .enumerate()
                .map(|(i, (c, w))| {
                    if i == 0 || i == 2 {
                        format!("{c:<w$}")
                    } else {
                        format!("{c:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(header.to_vec());
        for row in &body {
            line(row.iter().map(String::as_str).collect());
        }
        out
    }
}
