//! Prompt templates with `{{name}}` placeholders.
//!
//! The built-in set ships inside the binary; any template can be replaced
//! from a file via [`PromptSet::with_override`].

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Version of the built-in template set.
pub const PROMPT_SET_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PromptKind {
    System,
    Truncate,
    Summary,
    Ddx,
    ExtractFacts,
    DetectOmissions,
    Categorize,
    Cluster,
    Repair,
}

impl PromptKind {
    pub const ALL: [PromptKind; 9] = [
        Self::System,
        Self::Truncate,
        Self::Summary,
        Self::Ddx,
        Self::ExtractFacts,
        Self::DetectOmissions,
        Self::Categorize,
        Self::Cluster,
        Self::Repair,
    ];

    /// Key used in config files.
    pub fn key(self) -> &'static str {
        match self {
            Self::System => "system",
            Self::Truncate => "truncate",
            Self::Summary => "summary",
            Self::Ddx => "ddx",
            Self::ExtractFacts => "extract_facts",
            Self::DetectOmissions => "detect_omissions",
            Self::Categorize => "categorize",
            Self::Cluster => "cluster",
            Self::Repair => "repair",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.key() == key)
    }

    fn builtin(self) -> &'static str {
        match self {
            Self::System => include_str!("../../prompts/system.v1.txt"),
            Self::Truncate => include_str!("../../prompts/truncate.v1.txt"),
            Self::Summary => include_str!("../../prompts/summary.v1.txt"),
            Self::Ddx => include_str!("../../prompts/ddx.v1.txt"),
            Self::ExtractFacts => include_str!("../../prompts/extract_facts.v1.txt"),
            Self::DetectOmissions => include_str!("../../prompts/detect_omissions.v1.txt"),
            Self::Categorize => include_str!("../../prompts/categorize.v1.txt"),
            Self::Cluster => include_str!("../../prompts/cluster.v1.txt"),
            Self::Repair => include_str!("../../prompts/repair.v1.txt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: BTreeMap<PromptKind, String>,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            templates: PromptKind::ALL
                .into_iter()
                .map(|k| (k, k.builtin().to_string()))
                .collect(),
        }
    }
}

impl PromptSet {
    pub fn with_override(mut self, kind: PromptKind, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.templates.insert(kind, text);
        Ok(self)
    }

    pub fn template(&self, kind: PromptKind) -> &str {
        &self.templates[&kind]
    }

    /// Fills every `{{name}}` in the template. A placeholder without a value
    /// is an error.
    pub fn render(&self, kind: PromptKind, vars: &[(&str, &str)]) -> Result<String> {
        render(self.template(kind), vars).map_err(|name| {
            Error::Config(format!(
                "prompt {:?} needs a value for {{{{{name}}}}}",
                kind.key()
            ))
        })
    }
}

fn render(template: &str, vars: &[(&str, &str)]) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else {
            out.push_str(&rest[start..]);
            return Ok(out);
        };
        let name = after[..end].trim();
        let value = vars
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| name.to_string())?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_placeholders() {
        assert_eq!(
            render("a {{x}} b {{ y }}", &[("x", "1"), ("y", "2")]).unwrap(),
            "a 1 b 2"
        );
        assert_eq!(render("{{missing}}", &[]).unwrap_err(), "missing");
    }

    #[test]
    fn values_are_not_re_expanded() {
        assert_eq!(render("{{x}}", &[("x", "{{x}}")]).unwrap(), "{{x}}");
    }

    #[test]
    fn builtin_templates_render_with_their_variables() {
        let set = PromptSet::default();
        let cases: &[(PromptKind, &[&str])] = &[
            (PromptKind::Truncate, &["dialogue", "max_index"]),
            (PromptKind::Summary, &["dialogue"]),
            (
                PromptKind::Ddx,
                &["context", "context_kind", "context_kind_title"],
            ),
            (PromptKind::ExtractFacts, &["dialogue"]),
            (PromptKind::DetectOmissions, &["summary", "facts"]),
            (PromptKind::Categorize, &["ddx", "facts"]),
            (PromptKind::Cluster, &["ddx", "facts", "polarity_verb"]),
            (PromptKind::Repair, &["violations"]),
        ];
        for (kind, names) in cases {
            let vars: Vec<(&str, &str)> = names.iter().map(|n| (*n, "X")).collect();
            let text = set.render(*kind, &vars).unwrap();
            assert!(!text.contains("{{"), "{kind:?} left a placeholder");
        }
    }

    #[test]
    fn override_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.txt");
        std::fs::write(&path, "custom {{dialogue}}").unwrap();
        let set = PromptSet::default()
            .with_override(PromptKind::Summary, &path)
            .unwrap();
        assert_eq!(
            set.render(PromptKind::Summary, &[("dialogue", "D")])
                .unwrap(),
            "custom D"
        );
    }
}
