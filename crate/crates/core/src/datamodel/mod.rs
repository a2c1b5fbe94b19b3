//! Domain types shared by every pipeline stage.
//!
//! Values are plain data: immutable once built and `Send + Sync`. Each type
//! that carries invariants exposes a `violations()` method returning a
//! human-readable description per broken invariant; an empty list means the
//! value is valid.

mod clusters;
mod ddx;
mod dialogue;
mod envelope;
mod facts;
mod ids;
mod report;

use std::collections::{BTreeMap, BTreeSet};

pub use clusters::{EvidenceClustering, EvidenceGroup, Polarity, SubCluster};
pub use ddx::{name_key, DdxSource, Diagnosis, DifferentialDiagnosis, Likelihood, MAX_DIAGNOSES};
pub use dialogue::{Dialogue, SourceTag, Speaker, Summary, SummarySection, Turn};
pub use envelope::{Envelope, SCHEMA_VERSION};
pub use facts::{fact_list_violations, ContentCategory, Fact, Importance};
pub use ids::{FactId, FactIdParseError};
pub use report::{
    CompletionMargin, FactScore, MarginRatio, MarginUndefined, Omission, OmissionReport,
    ScoredOmission,
};

/// Cross-reference check over one encounter's artifacts.
///
/// Returns one description per violation; an empty list means the bundle is
/// consistent.
pub fn validate_encounter_bundle(
    dialogue: &Dialogue,
    facts: &[Fact],
    clusters: &[EvidenceClustering],
    omissions: &[Omission],
) -> Vec<String> {
    let mut out = dialogue.violations();
    out.extend(fact_list_violations(facts));
    let known: BTreeSet<FactId> = facts.iter().map(|f| f.fact_id).collect();

    for clustering in clusters {
        out.extend(clustering.violations());
        for sub in &clustering.subclusters {
            for id in &sub.fact_ids {
                if !known.contains(id) {
                    out.push(format!(
                        "{} references unknown fact {id}",
                        clustering.describe(sub)
                    ));
                }
            }
        }
    }

    let mut seen = BTreeSet::new();
    for omission in omissions {
        if !known.contains(&omission.fact_id) {
            out.push(format!(
                "omission references unknown fact {}",
                omission.fact_id
            ));
        }
        if !seen.insert(omission.fact_id) {
            out.push(format!(
                "fact {} is omitted more than once",
                omission.fact_id
            ));
        }
    }
    out
}

/// Non-fatal observations: a fact cited as both supporting and refuting the
/// same diagnosis, and sub-clusters labelled `NONE`.
pub fn bundle_warnings(clusters: &[EvidenceClustering]) -> Vec<String> {
    let mut out = Vec::new();
    let mut by_diagnosis: BTreeMap<String, BTreeMap<Polarity, BTreeSet<FactId>>> = BTreeMap::new();
    for c in clusters {
        let ids = by_diagnosis
            .entry(name_key(&c.diagnosis_name))
            .or_default()
            .entry(c.polarity)
            .or_default();
        for sub in &c.subclusters {
            ids.extend(sub.fact_ids.iter().copied());
            if sub.mechanism_label.trim().eq_ignore_ascii_case("none") {
                out.push(format!(
                    "{} uses NONE as a mechanism label",
                    c.describe(sub)
                ));
            }
        }
    }
    for (diagnosis, polarities) in &by_diagnosis {
        if let (Some(sup), Some(refu)) = (
            polarities.get(&Polarity::Supporting),
            polarities.get(&Polarity::Refuting),
        ) {
            for id in sup.intersection(refu) {
                out.push(format!(
                    "fact {id} both supports and refutes diagnosis {diagnosis:?}"
                ));
            }
        }
    }
    out
}
