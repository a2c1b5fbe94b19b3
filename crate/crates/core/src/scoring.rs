//! Fact cumulative score and the differential completion margin.
//!
//! Per-fact penalties are kept as exact rationals: tier weights are 1, 1/2
//! and 1/10 and uniqueness weights are 1/|S|, so document sums are exact and
//! only rounded when rendered as `f64`.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::datamodel::{
    CompletionMargin, DifferentialDiagnosis, EvidenceClustering, Fact, FactId, FactScore,
    Importance, MarginRatio, MarginUndefined, Omission, OmissionReport, Polarity, ScoredOmission,
};
use crate::error::{Error, Result};
use crate::gateway::{Gateway, GatewayError, ScoreRequest};

/// An exact, non-negative penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Weight(Ratio<i128>);

impl Weight {
    pub const ZERO: Weight = Weight(Ratio::new_raw(0, 1));

    pub fn new(numer: i128, denom: i128) -> Self {
        Weight(Ratio::new(numer, denom))
    }

    /// `1/size`; `size` must be positive.
    pub fn inverse_of(size: usize) -> Self {
        Weight(Ratio::new(1, size as i128))
    }

    pub fn ratio(self) -> Ratio<i128> {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        // numerators and denominators here are far below 2^53
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

impl std::ops::Add for Weight {
    type Output = Weight;

    fn add(self, rhs: Weight) -> Weight {
        Weight(self.0 + rhs.0)
    }
}

impl std::iter::Sum for Weight {
    fn sum<I: Iterator<Item = Weight>>(iter: I) -> Weight {
        iter.fold(Weight::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// Which clusterings count toward a fact's uniqueness weights.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniquenessScope {
    /// Supporting and refuting sub-clusters of every diagnosis.
    #[default]
    AllPolarities,
    SupportingOnly,
}

impl UniquenessScope {
    fn admits(self, polarity: Polarity) -> bool {
        match self {
            Self::AllPolarities => true,
            Self::SupportingOnly => polarity == Polarity::Supporting,
        }
    }
}

pub fn importance_weight_exact(tier: Importance) -> Weight {
    match tier {
        Importance::Critical => Weight::new(1, 1),
        Importance::Important => Weight::new(1, 2),
        Importance::Other => Weight::new(1, 10),
    }
}

/// critical → 1.0, important → 0.5, other → 0.1. An unset tier is an error.
pub fn importance_weight(tier: Option<Importance>) -> Result<f64> {
    tier.map(|t| importance_weight_exact(t).to_f64())
        .ok_or_else(|| Error::Scoring("importance tier is not set".into()))
}

/// One `1/|S|` per sub-cluster containing `fact_id`, in clustering order.
pub fn uniqueness_weights_exact(
    fact_id: FactId,
    clusterings: &[EvidenceClustering],
    scope: UniquenessScope,
) -> Vec<Weight> {
    clusterings
        .iter()
        .filter(|c| scope.admits(c.polarity))
        .flat_map(|c| c.subclusters.iter())
        .filter(|s| s.contains(fact_id) && s.size() > 0)
        .map(|s| Weight::inverse_of(s.size()))
        .collect()
}

pub fn uniqueness_weights(
    fact_id: FactId,
    clusterings: &[EvidenceClustering],
    scope: UniquenessScope,
) -> Vec<f64> {
    uniqueness_weights_exact(fact_id, clusterings, scope)
        .into_iter()
        .map(Weight::to_f64)
        .collect()
}

/// Maximum over the importance weight and every uniqueness weight.
pub fn fact_score_exact(importance: Weight, uniqueness: &[Weight]) -> Weight {
    uniqueness.iter().copied().fold(importance, Weight::max)
}

pub fn fact_score(importance: f64, uniqueness: &[f64]) -> f64 {
    uniqueness.iter().copied().fold(importance, f64::max)
}

/// Omission count and the exact sum of the omitted facts' scores.
pub fn document_score(
    omissions: &[Omission],
    fact_scores: &BTreeMap<FactId, Weight>,
) -> Result<(usize, Weight)> {
    let mut total = Weight::ZERO;
    for o in omissions {
        let w = fact_scores
            .get(&o.fact_id)
            .ok_or_else(|| Error::Scoring(format!("omitted fact {} has no score", o.fact_id)))?;
        total = total + *w;
    }
    Ok((omissions.len(), total))
}

/// Scores every fact; fails if any fact lacks an importance tier.
pub fn score_facts(
    facts: &[Fact],
    clusterings: &[EvidenceClustering],
    scope: UniquenessScope,
) -> Result<BTreeMap<FactId, (FactScore, Weight)>> {
    facts
        .iter()
        .map(|fact| {
            let tier = fact.importance.ok_or_else(|| {
                Error::Scoring(format!("fact {} has no importance tier", fact.fact_id))
            })?;
            let i = importance_weight_exact(tier);
            let u = uniqueness_weights_exact(fact.fact_id, clusterings, scope);
            let combined = fact_score_exact(i, &u);
            let score = FactScore {
                fact_id: fact.fact_id,
                importance: tier,
                importance_weight: i.to_f64(),
                uniqueness_weights: u.iter().map(|w| w.to_f64()).collect(),
                combined: combined.to_f64(),
            };
            Ok((fact.fact_id, (score, combined)))
        })
        .collect()
}

/// Builds the per-encounter report from categorized facts, clusterings and
/// omissions.
pub fn build_report(
    encounter_id: &str,
    facts: &[Fact],
    clusterings: &[EvidenceClustering],
    omissions: &[Omission],
    margin: Option<CompletionMargin>,
    scope: UniquenessScope,
) -> Result<OmissionReport> {
    let scored = score_facts(facts, clusterings, scope)?;
    let exact: BTreeMap<FactId, Weight> = scored.iter().map(|(k, (_, w))| (*k, *w)).collect();
    let (count, total) = document_score(omissions, &exact)?;
    let omissions = omissions
        .iter()
        .map(|o| ScoredOmission {
            omission: o.clone(),
            score: scored[&o.fact_id].0.clone(),
        })
        .collect();
    Ok(OmissionReport {
        encounter_id: encounter_id.to_string(),
        omissions,
        omission_count: count,
        cumulative_weight: total.to_f64(),
        margin,
        warnings: Vec::new(),
    })
}

/// Default margin-denominator threshold on the aggregate log-prob scale.
pub const DEFAULT_MARGIN_EPSILON: f64 = 1e-9;

/// `(l_c0 - l_c1) / (l_s0 - l_s1)`, or the reason it is undefined.
pub fn margin_ratio(
    l_c0: f64,
    l_c1: Option<f64>,
    l_s0: f64,
    l_s1: Option<f64>,
    epsilon: f64,
) -> MarginRatio {
    let Some(l_c1) = l_c1 else {
        return MarginRatio::Undefined(MarginUndefined::NoChatAlternative);
    };
    let Some(l_s1) = l_s1 else {
        return MarginRatio::Undefined(MarginUndefined::NoSummaryAlternative);
    };
    let denominator = l_s0 - l_s1;
    // NaN fails this comparison too.
    if denominator
        .abs()
        .partial_cmp(&epsilon)
        .is_none_or(|o| o.is_lt())
    {
        return MarginRatio::Undefined(MarginUndefined::ZeroSummaryMargin);
    }
    let ratio = (l_c0 - l_c1) / denominator;
    if ratio.is_finite() {
        MarginRatio::Defined(ratio)
    } else {
        MarginRatio::Undefined(MarginUndefined::ZeroSummaryMargin)
    }
}

#[derive(Debug, Clone)]
pub struct MarginOptions {
    pub model_id: String,
    /// Phrase appended after the context, before the diagnosis name.
    pub prompt_phrase: String,
    pub epsilon: f64,
}

impl MarginOptions {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            prompt_phrase: "The patient most likely has".into(),
            epsilon: DEFAULT_MARGIN_EPSILON,
        }
    }
}

/// Computes the four completion scores through the gateway and their ratio.
///
/// `chat_prefix` and `summary_prefix` are the rendered contexts; the scoring
/// prefix is `context + "\n" + phrase` and the continuation is
/// `" " + diagnosis name`.
pub fn completion_margin(
    chat_prefix: &str,
    summary_prefix: &str,
    chat_ddx: &DifferentialDiagnosis,
    summary_ddx: &DifferentialDiagnosis,
    gateway: &Gateway,
    options: &MarginOptions,
    tag_prefix: &str,
) -> Result<CompletionMargin> {
    let top = chat_ddx
        .top()
        .ok_or_else(|| Error::Scoring("chat differential is empty".into()))?;
    let chat_alt = chat_ddx.top_non_probable();
    let summary_alt = summary_ddx.top_non_probable();

    let chat_ctx = format!("{}\n{}", chat_prefix.trim_end(), options.prompt_phrase);
    let summary_ctx = format!("{}\n{}", summary_prefix.trim_end(), options.prompt_phrase);
    let request = |ctx: &str, name: &str, slot: &str| ScoreRequest {
        model_id: options.model_id.clone(),
        prefix: ctx.to_string(),
        continuation: format!(" {}", name.trim()),
        tag: Some(format!("{tag_prefix}/margin/{slot}")),
    };
    let score = |req: ScoreRequest| -> std::result::Result<f64, GatewayError> {
        gateway.score_continuation(&req).map(|s| s.aggregate)
    };

    let (l_c0, l_c1, l_s0, l_s1) = std::thread::scope(|s| {
        let c0 = s.spawn(|| score(request(&chat_ctx, &top.name, "c0")));
        let c1 = s.spawn(|| {
            chat_alt
                .map(|d| score(request(&chat_ctx, &d.name, "c1")))
                .transpose()
        });
        let s0 = s.spawn(|| score(request(&summary_ctx, &top.name, "s0")));
        let s1 = s.spawn(|| {
            summary_alt
                .map(|d| score(request(&summary_ctx, &d.name, "s1")))
                .transpose()
        });
        (
            c0.join().expect("scoring thread"),
            c1.join().expect("scoring thread"),
            s0.join().expect("scoring thread"),
            s1.join().expect("scoring thread"),
        )
    });
    let (l_c0, l_c1, l_s0, l_s1) = (l_c0?, l_c1?, l_s0?, l_s1?);

    Ok(CompletionMargin {
        top_diagnosis: top.name.clone(),
        chat_alternative: chat_alt.map(|d| d.name.clone()),
        summary_alternative: summary_alt.map(|d| d.name.clone()),
        l_c0,
        l_c1,
        l_s0,
        l_s1,
        ratio: margin_ratio(l_c0, l_c1, l_s0, l_s1, options.epsilon),
    })
}
