use schemars::JsonSchema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: &str = "1";

/// Versioned wrapper written around every on-disk artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Envelope<T> {
    pub schema_version: String,
    pub kind: String,
    pub data: T,
}

impl<T> Envelope<T> {
    pub fn new(kind: impl Into<String>, data: T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            kind: kind.into(),
            data,
        }
    }
}

impl<T: Serialize> Envelope<T> {
    /// Pretty JSON with a trailing newline. Output is byte-stable because all
    /// maps in the data model are ordered.
    pub fn to_canonical_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

impl<T: DeserializeOwned> Envelope<T> {
    pub fn from_json(raw: &str, expected_kind: &str) -> Result<T> {
        let env: Envelope<T> = serde_json::from_str(raw)?;
        if env.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported schema_version {:?} (expected {SCHEMA_VERSION:?})",
                env.schema_version
            )));
        }
        if env.kind != expected_kind {
            return Err(Error::Schema(format!(
                "expected artifact kind {expected_kind:?}, found {:?}",
                env.kind
            )));
        }
        Ok(env.data)
    }
}
