//! Strict parsers for the fenced answer blocks each stage asks for.
//!
//! A parser either returns a value that satisfies the data-model invariants
//! or the full list of problems it found, which is quoted back to the model
//! in the repair round.

use std::collections::{BTreeMap, BTreeSet};

use crate::datamodel::{
    fact_list_violations, name_key, ContentCategory, DdxSource, Diagnosis, DifferentialDiagnosis,
    EvidenceClustering, EvidenceGroup, Fact, FactId, Importance, Likelihood, Omission, Polarity,
    SubCluster, Summary, SummarySection, MAX_DIAGNOSES,
};

pub type Violations = Vec<String>;

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

/// Body of the last fenced block in `raw`. Prose around the block is ignored.
pub fn extract_block(raw: &str) -> Result<String, Violations> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in raw.lines() {
        let fence = line.trim_start().starts_with("```");
        match (&mut current, fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(lines), true) => {
                blocks.push(lines.join("\n"));
                current = None;
            }
            (Some(lines), false) => lines.push(line),
            (None, false) => {}
        }
    }
    if current.is_some() {
        return Err(vec!["the fenced block is not closed with ```".to_string()]);
    }
    blocks
        .pop()
        .ok_or_else(|| vec!["no fenced ``` block found in the answer".to_string()])
}

fn content_lines(block: &str) -> impl Iterator<Item = &str> {
    block.lines().map(str::trim).filter(|l| !l.is_empty())
}

fn is_none(s: &str) -> bool {
    let s = s.trim().trim_matches(|c: char| c == '.' || c == '*');
    s.eq_ignore_ascii_case("none") || s.eq_ignore_ascii_case("n/a")
}

/// Comma- or whitespace-separated fact ids; `NONE` yields an empty list.
fn parse_id_list(raw: &str) -> Result<Vec<FactId>, String> {
    if is_none(raw) || raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.parse::<FactId>().map_err(|e| e.to_string()))
        .collect()
}

/// Splits `HEAD: rest` at the first colon.
fn split_heading(line: &str) -> Option<(&str, &str)> {
    line.split_once(':').map(|(h, r)| (h.trim(), r.trim()))
}

pub fn parse_truncation(block: &str, turn_count: usize) -> Result<usize, Violations> {
    let mut found = None;
    for line in content_lines(block) {
        let Some((head, value)) = split_heading(line) else {
            return Err(vec![format!("unrecognized line {line:?}")]);
        };
        if !head.eq_ignore_ascii_case("LAST_SUBJECTIVE_TURN") {
            return Err(vec![format!("unrecognized line {line:?}")]);
        }
        let value = value.trim_matches(|c: char| c == '[' || c == ']' || c == '.');
        let idx: usize = value.parse().map_err(|_| {
            vec![format!(
                "turn index {value:?} is not a non-negative integer"
            )]
        })?;
        if found.replace(idx).is_some() {
            return Err(vec!["LAST_SUBJECTIVE_TURN given more than once".to_string()]);
        }
    }
    let idx = found.ok_or_else(|| vec!["missing LAST_SUBJECTIVE_TURN line".to_string()])?;
    if idx >= turn_count {
        return Err(vec![format!(
            "turn index {idx} is out of range; the conversation has turns 0 to {}",
            turn_count.saturating_sub(1)
        )]);
    }
    Ok(idx)
}

pub fn parse_summary(
    block: &str,
    encounter_id: &str,
    generator_tag: &str,
) -> Result<Parsed<Summary>, Violations> {
    let mut violations = Vec::new();
    let mut sections: BTreeMap<SummarySection, Vec<String>> = BTreeMap::new();
    let mut current: Option<SummarySection> = None;
    for line in content_lines(block) {
        let heading = split_heading(line)
            .and_then(|(h, rest)| SummarySection::from_heading(h).map(|s| (s, rest)));
        match heading {
            Some((section, rest)) => {
                if sections.contains_key(&section) {
                    violations.push(format!(
                        "section {} appears more than once",
                        section.heading()
                    ));
                }
                let entry = sections.entry(section).or_default();
                if !rest.is_empty() {
                    entry.push(rest.to_string());
                }
                current = Some(section);
            }
            None => match current {
                Some(section) => sections.entry(section).or_default().push(line.to_string()),
                None => violations.push(format!("text before the first section heading: {line:?}")),
            },
        }
    }
    if sections.is_empty() {
        violations.push(
            "no section headings found (CHIEF COMPLAINT, HISTORY OF PRESENT ILLNESS, PAST SOCIAL HISTORY)"
                .to_string(),
        );
    }
    let summary = Summary {
        encounter_id: encounter_id.to_string(),
        sections: SummarySection::ALL
            .into_iter()
            .map(|s| (s, sections.get(&s).map(|l| l.join(" ")).unwrap_or_default()))
            .collect(),
        generator_tag: generator_tag.to_string(),
    };
    violations.extend(summary.violations());
    if !violations.is_empty() {
        return Err(violations);
    }
    let warnings = summary
        .empty_sections()
        .into_iter()
        .map(|s| format!("summary section {} is empty", s.heading()))
        .collect();
    Ok(Parsed {
        value: summary,
        warnings,
    })
}

pub fn parse_ddx(
    block: &str,
    encounter_id: &str,
    source: DdxSource,
) -> Result<DifferentialDiagnosis, Violations> {
    let mut violations = Vec::new();
    let mut entries = Vec::new();
    for line in content_lines(block) {
        let Some((rank_part, rest)) = line.split_once(['.', ')']) else {
            violations.push(format!("line {line:?} does not start with a rank"));
            continue;
        };
        let Ok(rank) = rank_part.trim().parse::<u32>() else {
            violations.push(format!("line {line:?} does not start with a rank"));
            continue;
        };
        let fields: Vec<&str> = rest.splitn(3, '|').map(str::trim).collect();
        if fields.len() < 2 || fields[0].is_empty() {
            violations.push(format!(
                "line {line:?} is not `rank. name | likelihood | explanation`"
            ));
            continue;
        }
        let Some(likelihood) = Likelihood::parse_label(fields[1]) else {
            violations.push(format!(
                "unknown likelihood {:?} for {:?}; use probable, possible or unlikely",
                fields[1], fields[0]
            ));
            continue;
        };
        entries.push(Diagnosis {
            rank,
            name: fields[0].to_string(),
            likelihood,
            explanation: fields.get(2).copied().unwrap_or_default().to_string(),
        });
    }
    if entries.len() > MAX_DIAGNOSES {
        violations.push(format!(
            "{} diagnoses listed; at most {MAX_DIAGNOSES} are allowed",
            entries.len()
        ));
    }
    for (pos, d) in entries.iter().enumerate() {
        if d.rank as usize != pos + 1 {
            violations.push(format!(
                "ranks must run 1, 2, 3, ... in order; found rank {} at position {}",
                d.rank,
                pos + 1
            ));
            break;
        }
    }
    let ddx = DifferentialDiagnosis {
        encounter_id: encounter_id.to_string(),
        source,
        entries,
    };
    for v in ddx.violations() {
        if !violations.contains(&v) && !v.contains("at most") && !v.contains("ascending") {
            violations.push(v);
        }
    }
    if violations.is_empty() {
        Ok(ddx)
    } else {
        Err(violations)
    }
}

pub fn parse_facts(block: &str) -> Result<Vec<Fact>, Violations> {
    let mut violations = Vec::new();
    let mut facts = Vec::new();
    for line in content_lines(block) {
        let Some((head, text)) = line.split_once(':') else {
            violations.push(format!("line {line:?} is not `F<n> [category]: text`"));
            continue;
        };
        let (id_part, category_part) = match head.split_once('[') {
            Some((id, cat)) => (id, Some(cat.trim_end().trim_end_matches(']'))),
            None => (head, None),
        };
        let id = match id_part.parse::<FactId>() {
            Ok(id) => id,
            Err(e) => {
                violations.push(format!("{e} in line {line:?}"));
                continue;
            }
        };
        let Some(category_raw) = category_part else {
            violations.push(format!("fact {id} has no [category]"));
            continue;
        };
        let Some(category) = ContentCategory::parse_label(category_raw) else {
            violations.push(format!(
                "fact {id} has unknown category {category_raw:?}; use medical, care_access_or_sdoh or non_medical"
            ));
            continue;
        };
        facts.push(Fact {
            fact_id: id,
            text: text.trim().to_string(),
            content_category: category,
            importance: None,
        });
    }
    if facts.is_empty() && violations.is_empty() {
        violations.push("no facts listed".to_string());
    }
    violations.extend(fact_list_violations(&facts));
    if violations.is_empty() {
        facts.sort_by_key(|f| f.fact_id);
        Ok(facts)
    } else {
        Err(violations)
    }
}

pub fn parse_omissions(block: &str, facts: &[Fact]) -> Result<Vec<Omission>, Violations> {
    let known: BTreeSet<FactId> = facts.iter().map(|f| f.fact_id).collect();
    let lines: Vec<&str> = content_lines(block).collect();
    if lines.len() == 1 && is_none(lines[0]) {
        return Ok(Vec::new());
    }
    let mut violations = Vec::new();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for line in lines {
        let Some((head, explanation)) = line.split_once(':') else {
            violations.push(format!("line {line:?} is not `F<n>: explanation`"));
            continue;
        };
        let id = match head.parse::<FactId>() {
            Ok(id) => id,
            Err(e) => {
                violations.push(format!("{e} in line {line:?}"));
                continue;
            }
        };
        if !known.contains(&id) {
            violations.push(format!("omission references unknown fact {id}"));
            continue;
        }
        if !seen.insert(id) {
            violations.push(format!("fact {id} is listed more than once"));
            continue;
        }
        if explanation.trim().is_empty() {
            violations.push(format!("fact {id} has no explanation"));
            continue;
        }
        out.push(Omission {
            fact_id: id,
            explanation: explanation.trim().to_string(),
        });
    }
    if violations.is_empty() {
        Ok(out)
    } else {
        Err(violations)
    }
}

/// Assigns an importance tier to every fact. The assignment must be a total
/// partition of the fact ids.
pub fn parse_categorization(block: &str, facts: &[Fact]) -> Result<Vec<Fact>, Violations> {
    let known: BTreeSet<FactId> = facts.iter().map(|f| f.fact_id).collect();
    let mut violations = Vec::new();
    let mut assigned: BTreeMap<FactId, Importance> = BTreeMap::new();
    for line in content_lines(block) {
        let Some((head, rest)) = split_heading(line) else {
            violations.push(format!("line {line:?} is not `TIER: F<n>, ...`"));
            continue;
        };
        let Some(tier) = Importance::parse_label(head) else {
            violations.push(format!(
                "unknown category {head:?}; use CRITICAL, IMPORTANT or OTHER"
            ));
            continue;
        };
        let ids = match parse_id_list(rest) {
            Ok(ids) => ids,
            Err(e) => {
                violations.push(format!("{e} under {}", tier.as_str().to_uppercase()));
                continue;
            }
        };
        for id in ids {
            if !known.contains(&id) {
                violations.push(format!("unknown fact {id}"));
                continue;
            }
            if let Some(prev) = assigned.insert(id, tier) {
                violations.push(format!(
                    "fact {id} assigned more than once ({} and {})",
                    prev.as_str(),
                    tier.as_str()
                ));
            }
        }
    }
    let missing: Vec<String> = known
        .iter()
        .filter(|id| !assigned.contains_key(id))
        .map(|id| id.to_string())
        .collect();
    if !missing.is_empty() {
        violations.push(format!("facts not categorized: {}", missing.join(", ")));
    }
    if !violations.is_empty() {
        return Err(violations);
    }
    Ok(facts
        .iter()
        .map(|f| Fact {
            importance: Some(assigned[&f.fact_id]),
            ..f.clone()
        })
        .collect())
}

fn strip_bullet(line: &str) -> Option<&str> {
    ["- ", "* ", "• ", "-", "•"]
        .iter()
        .find_map(|b| line.strip_prefix(b))
        .map(str::trim)
}

/// One clustering per diagnosis of `ddx`, in differential order.
pub fn parse_clusters(
    block: &str,
    ddx: &DifferentialDiagnosis,
    polarity: Polarity,
    facts: &[Fact],
) -> Result<Parsed<Vec<EvidenceClustering>>, Violations> {
    let known: BTreeSet<FactId> = facts.iter().map(|f| f.fact_id).collect();
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    // diagnosis key -> subclusters
    let mut parsed: BTreeMap<String, Vec<SubCluster>> = BTreeMap::new();
    let mut diagnosis: Option<String> = None;
    let mut group: Option<EvidenceGroup> = None;

    for line in content_lines(block) {
        if let Some(rest) = strip_bullet(line) {
            let Some(key) = &diagnosis else {
                violations.push(format!(
                    "cluster line {line:?} appears before any DIAGNOSIS"
                ));
                continue;
            };
            let Some(g) = group else {
                violations.push(format!(
                    "cluster line {line:?} appears before any group heading"
                ));
                continue;
            };
            let Some((label, ids)) = rest.rsplit_once(':') else {
                violations.push(format!(
                    "cluster line {line:?} is not `- mechanism: F<n>, ...`"
                ));
                continue;
            };
            let label = label.trim().to_string();
            let ids = match parse_id_list(ids) {
                Ok(ids) => ids,
                Err(e) => {
                    violations.push(format!("{e} in cluster {label:?}"));
                    continue;
                }
            };
            if ids.is_empty() {
                violations.push(format!("cluster {label:?} lists no facts"));
                continue;
            }
            if label.is_empty() {
                violations.push(format!("cluster line {line:?} has no mechanism name"));
                continue;
            }
            let mut seen = BTreeSet::new();
            for id in &ids {
                if !known.contains(id) {
                    violations.push(format!("cluster {label:?} references unknown fact {id}"));
                }
                if !seen.insert(*id) {
                    violations.push(format!("cluster {label:?} lists {id} more than once"));
                }
            }
            if is_none(&label) {
                warnings.push(format!(
                    "{polarity} cluster under {:?} is labelled NONE instead of a mechanism",
                    ddx.find(key).map(|d| d.name.as_str()).unwrap_or(key)
                ));
            }
            parsed.entry(key.clone()).or_default().push(SubCluster {
                group: g,
                mechanism_label: label,
                fact_ids: ids,
            });
            continue;
        }

        let Some((head, rest)) = split_heading(line) else {
            violations.push(format!("unrecognized line {line:?}"));
            continue;
        };
        if head.eq_ignore_ascii_case("DIAGNOSIS") {
            let key = name_key(rest);
            if ddx.find(rest).is_none() {
                violations.push(format!("diagnosis {rest:?} is not in the differential"));
                diagnosis = None;
            } else if parsed.contains_key(&key) {
                violations.push(format!("diagnosis {rest:?} appears more than once"));
                diagnosis = None;
            } else {
                parsed.insert(key.clone(), Vec::new());
                diagnosis = Some(key);
            }
            group = None;
        } else if let Some(g) = EvidenceGroup::from_heading(head) {
            if diagnosis.is_none() {
                violations.push(format!("group {head:?} appears before any DIAGNOSIS"));
            }
            group = Some(g);
            if !rest.is_empty() && !is_none(rest) {
                violations.push(format!(
                    "group heading {head:?} must be followed by NONE or by `- mechanism: ids` lines"
                ));
            }
        } else {
            violations.push(format!("unrecognized heading {head:?}"));
        }
    }

    let missing: Vec<&str> = ddx
        .entries
        .iter()
        .filter(|d| !parsed.contains_key(&name_key(&d.name)))
        .map(|d| d.name.as_str())
        .collect();
    if !missing.is_empty() {
        violations.push(format!("diagnoses not covered: {}", missing.join(", ")));
    }
    if !violations.is_empty() {
        return Err(violations);
    }
    let clusterings = ddx
        .entries
        .iter()
        .map(|d| {
            let subs = parsed.remove(&name_key(&d.name)).unwrap_or_default();
            EvidenceClustering::new(d.name.clone(), polarity, subs)
        })
        .collect();
    Ok(Parsed {
        value: clusterings,
        warnings,
    })
}
