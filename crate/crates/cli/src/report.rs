use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use omission_core::datamodel::{CompletionMargin, FactId, MarginRatio, Summary};
use omission_core::dataset::OutputLayout;

/// Machine-readable form of the printed report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportView {
    pub encounter_id: String,
    pub summary: Summary,
    pub omitted_facts: Vec<OmittedFactView>,
    pub omission_count: usize,
    pub cumulative_weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<CompletionMargin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmittedFactView {
    pub fact_id: FactId,
    pub text: String,
    pub explanation: String,
    pub score: f64,
}

/// Up to three decimals, trailing zeros dropped: `1`, `0.5`, `0.333`.
pub fn fmt_score(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

pub fn load_view(out: &Path, encounter: &str) -> Result<ReportView> {
    let dir = OutputLayout::new(out).encounter(encounter);
    let report = dir
        .report()
        .with_context(|| format!("encounter {encounter}"))?;
    let summary = dir.summary()?;
    let facts = dir.facts()?;
    let omitted_facts = report
        .omissions
        .iter()
        .map(|o| {
            let text = facts
                .iter()
                .find(|f| f.fact_id == o.omission.fact_id)
                .map(|f| f.text.clone())
                .unwrap_or_default();
            OmittedFactView {
                fact_id: o.omission.fact_id,
                text,
                explanation: o.omission.explanation.clone(),
                score: o.score.combined,
            }
        })
        .collect();
    Ok(ReportView {
        encounter_id: report.encounter_id,
        summary,
        omitted_facts,
        omission_count: report.omission_count,
        cumulative_weight: report.cumulative_weight,
        margin: report.margin,
    })
}

pub fn render(view: &ReportView) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Encounter {}\n", view.encounter_id);
    let _ = writeln!(out, "Summary");
    out.push_str(view.summary.render().trim_end());
    let _ = writeln!(out, "\n\nOmitted Facts");
    if view.omitted_facts.is_empty() {
        let _ = writeln!(out, "no omissions detected");
    }
    for f in &view.omitted_facts {
        let _ = writeln!(out, "{}: {}", f.fact_id, f.text);
        let _ = writeln!(out, "    {} (Score: {})", f.explanation, fmt_score(f.score));
    }
    let _ = writeln!(out, "\nOmission count: {}", view.omission_count);
    let _ = writeln!(
        out,
        "Cumulative weight: {}",
        fmt_score(view.cumulative_weight)
    );
    if let Some(m) = &view.margin {
        let ratio = match &m.ratio {
            MarginRatio::Defined(v) => fmt_score(*v),
            MarginRatio::Undefined(reason) => format!(
                "undefined ({})",
                serde_json::to_value(reason)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default()
            ),
        };
        let _ = writeln!(
            out,
            "Completion margin: {ratio} (top diagnosis: {})",
            m.top_diagnosis
        );
    }
    out
}

pub fn cmd_report(out: &Path, encounter: &str, json: bool) -> Result<u8> {
    let view = load_view(out, encounter)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&view)?);
    } else {
        print!("{}", render(&view));
    }
    Ok(super::EXIT_OK)
}
