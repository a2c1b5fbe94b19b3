use std::collections::BTreeSet;
use std::fmt;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::facts::normalize_label;
use super::FactId;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Supporting,
    Refuting,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Supporting => "supporting",
            Self::Refuting => "refuting",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Evidence grouping used for sub-clusters under a diagnosis.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceGroup {
    Symptoms,
    Tests,
    Treatments,
    SocialDeterminantOfHealth,
    Other,
}

impl EvidenceGroup {
    pub const ALL: [EvidenceGroup; 5] = [
        Self::Symptoms,
        Self::Tests,
        Self::Treatments,
        Self::SocialDeterminantOfHealth,
        Self::Other,
    ];

    pub fn heading(self) -> &'static str {
        match self {
            Self::Symptoms => "SYMPTOMS",
            Self::Tests => "TESTS",
            Self::Treatments => "TREATMENTS",
            Self::SocialDeterminantOfHealth => "SOCIAL DETERMINANT OF HEALTH",
            Self::Other => "OTHER",
        }
    }

    /// Accepts headings case-insensitively, including singular forms and the
    /// "determinate" misspelling models tend to copy.
    pub fn from_heading(raw: &str) -> Option<Self> {
        match normalize_label(raw).as_str() {
            "symptoms" | "symptom" => Some(Self::Symptoms),
            "tests" | "test" => Some(Self::Tests),
            "treatments" | "treatment" => Some(Self::Treatments),
            "social_determinant_of_health"
            | "social_determinants_of_health"
            | "social_determinate_of_health"
            | "social_determinates_of_health"
            | "sdoh" => Some(Self::SocialDeterminantOfHealth),
            "other" | "others" => Some(Self::Other),
            _ => None,
        }
    }
}

/// Facts that point at one diagnosis through the same mechanism.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct SubCluster {
    pub group: EvidenceGroup,
    pub mechanism_label: String,
    pub fact_ids: Vec<FactId>,
}

impl SubCluster {
    pub fn size(&self) -> usize {
        self.fact_ids.len()
    }

    pub fn contains(&self, id: FactId) -> bool {
        self.fact_ids.contains(&id)
    }
}

/// Supporting or refuting evidence for a single diagnosis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct EvidenceClustering {
    pub diagnosis_name: String,
    pub polarity: Polarity,
    pub subclusters: Vec<SubCluster>,
    /// Groups with no sub-cluster, kept so that "TESTS: NONE" survives a
    /// round trip. Always the complement of the groups used in `subclusters`.
    pub empty_groups: Vec<EvidenceGroup>,
}

impl EvidenceClustering {
    pub fn new(
        diagnosis_name: impl Into<String>,
        polarity: Polarity,
        subclusters: Vec<SubCluster>,
    ) -> Self {
        let used: BTreeSet<_> = subclusters.iter().map(|s| s.group).collect();
        let empty_groups = EvidenceGroup::ALL
            .into_iter()
            .filter(|g| !used.contains(g))
            .collect();
        Self {
            diagnosis_name: diagnosis_name.into(),
            polarity,
            subclusters,
            empty_groups,
        }
    }

    pub fn subclusters_in(&self, group: EvidenceGroup) -> impl Iterator<Item = &SubCluster> {
        self.subclusters.iter().filter(move |s| s.group == group)
    }

    /// Structural violations that do not need the fact list.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.diagnosis_name.trim().is_empty() {
            out.push("evidence clustering with empty diagnosis name".to_string());
        }
        for sub in &self.subclusters {
            let label = self.describe(sub);
            if sub.mechanism_label.trim().is_empty() {
                out.push(format!("{label} has an empty mechanism label"));
            }
            if sub.fact_ids.is_empty() {
                out.push(format!("{label} has no facts"));
            }
            let mut seen = BTreeSet::new();
            for id in &sub.fact_ids {
                if !seen.insert(*id) {
                    out.push(format!("{label} lists {id} more than once"));
                }
            }
        }
        let used: BTreeSet<_> = self.subclusters.iter().map(|s| s.group).collect();
        let expected: Vec<_> = EvidenceGroup::ALL
            .into_iter()
            .filter(|g| !used.contains(g))
            .collect();
        if expected != self.empty_groups {
            out.push(format!(
                "{} clustering for {:?} has inconsistent empty groups",
                self.polarity, self.diagnosis_name
            ));
        }
        out
    }

    pub(crate) fn describe(&self, sub: &SubCluster) -> String {
        format!(
            "subcluster {:?} ({}, {} {:?})",
            sub.mechanism_label,
            sub.group.heading().to_lowercase(),
            self.polarity,
            self.diagnosis_name
        )
    }
}
