use std::fmt;
use std::str::FromStr;

use schemars::JsonSchema;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Identifier of an extracted fact, rendered as `F` followed by a decimal index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FactId(pub u32);

impl FactId {
    pub fn index(self) -> u32 {
        self.0
    }
}

impl fmt::Display for FactId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed fact id {0:?}")]
pub struct FactIdParseError(pub String);

impl FromStr for FactId {
    type Err = FactIdParseError;

    /// Accepts `F12`, `f12`, ` F12: ` and similar; surrounding whitespace,
    /// brackets and trailing colons are ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s
            .trim()
            .trim_start_matches(['[', '(', '*'])
            .trim_end_matches([':', ']', ')', '.', ',', '*'])
            .trim();
        let digits = trimmed
            .strip_prefix('F')
            .or_else(|| trimmed.strip_prefix('f'))
            .ok_or_else(|| FactIdParseError(s.to_string()))?
            .trim();
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(FactIdParseError(s.to_string()));
        }
        digits
            .parse::<u32>()
            .map(FactId)
            .map_err(|_| FactIdParseError(s.to_string()))
    }
}

impl Serialize for FactId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FactId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

impl JsonSchema for FactId {
    fn schema_name() -> String {
        "FactId".to_string()
    }

    fn json_schema(_gen: &mut schemars::gen::SchemaGenerator) -> schemars::schema::Schema {
        schemars::schema::SchemaObject {
            instance_type: Some(schemars::schema::InstanceType::String.into()),
            string: Some(Box::new(schemars::schema::StringValidation {
                pattern: Some("^F[0-9]+$".to_string()),
                ..Default::default()
            })),
            ..Default::default()
        }
        .into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_normalized_forms() {
        for raw in ["F14", "f14", " F14: ", "F14:", "[F14]", "F 14"] {
            assert_eq!(raw.parse::<FactId>().unwrap(), FactId(14), "{raw}");
        }
    }

    #[test]
    fn rejects_garbage() {
        for raw in ["", "14", "F", "Fx1", "F-1", "G3", "F1a"] {
            assert!(raw.parse::<FactId>().is_err(), "{raw}");
        }
    }

    #[test]
    fn serde_uses_display_form() {
        let json = serde_json::to_string(&FactId(7)).unwrap();
        assert_eq!(json, "\"F7\"");
        let back: FactId = serde_json::from_str(&json).unwrap();
        assert_eq!(back, FactId(7));
    }
}
