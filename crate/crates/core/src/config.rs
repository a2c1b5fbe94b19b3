//! Run configuration, read from TOML.
//!
//! Relative paths (mock scripts, cassette, prompt overrides) resolve against
//! the directory holding the config file. Credentials are never stored here;
//! a backend names the environment variable that holds its key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{
    Aggregation, Backend, Cassette, Gateway, MockBackend, MockScript, Mode, OpenAiBackend,
    OpenAiConfig, RetryPolicy,
};
use crate::pipeline::{ModelRoles, PipelineConfig, PromptKind, PromptSet};
use crate::scoring::{UniquenessScope, DEFAULT_MARGIN_EPSILON};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub id: String,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsConfig {
    pub summary: ModelSpec,
    pub metric: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<ModelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    /// OpenAI-compatible HTTP API.
    Openai {
        base_url: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
        #[serde(default)]
        supports_logprobs: bool,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
    /// Scripted replies from a JSON file.
    Mock { script: PathBuf },
}

fn default_timeout_secs() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    #[serde(flatten)]
    pub kind: BackendKind,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub min_interval_ms: u64,
}

fn default_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatewayConfig {
    pub cassette: Option<PathBuf>,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub aggregation: Aggregation,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            cassette: None,
            max_attempts: 3,
            backoff_ms: 500,
            aggregation: Aggregation::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSettings {
    pub min_truncated_turns: usize,
    pub repair_budget: u32,
    pub max_output_tokens: u32,
    pub temperature: f64,
    pub uniqueness_scope: UniquenessScope,
    pub margin_prompt_phrase: String,
    pub margin_epsilon: f64,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            min_truncated_turns: 6,
            repair_budget: 1,
            max_output_tokens: 2048,
            temperature: 0.0,
            uniqueness_scope: UniquenessScope::AllPolarities,
            margin_prompt_phrase: "The patient most likely has".into(),
            margin_epsilon: DEFAULT_MARGIN_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub models: ModelsConfig,
    #[serde(default)]
    pub backends: BTreeMap<String, BackendConfig>,
    #[serde(default)]
    pub gateway: GatewayConfig,
    #[serde(default)]
    pub pipeline: PipelineSettings,
    /// Template overrides by prompt key (`summary`, `cluster`, ...).
    #[serde(default)]
    pub prompts: BTreeMap<String, PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_workers() -> usize {
    4
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&raw).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn from_toml(raw: &str) -> Result<Self> {
        let config: Config = toml::from_str(raw).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        let mut roles = vec![
            ("summary", &self.models.summary),
            ("metric", &self.models.metric),
        ];
        if let Some(m) = &self.models.margin {
            roles.push(("margin", m));
        }
        for (role, spec) in roles {
            if !self.backends.contains_key(&spec.backend) {
                return Err(Error::Config(format!(
                    "model role {role} uses undefined backend {:?}",
                    spec.backend
                )));
            }
        }
        // Two roles may share a model id only if they share a backend, since
        // the gateway routes by model id.
        let mut routes: BTreeMap<&str, &str> = BTreeMap::new();
        for spec in self.role_specs() {
            if let Some(prev) = routes.insert(&spec.id, &spec.backend) {
                if prev != spec.backend {
                    return Err(Error::Config(format!(
                        "model {:?} is assigned to backends {prev:?} and {:?}",
                        spec.id, spec.backend
                    )));
                }
            }
        }
        for key in self.prompts.keys() {
            if PromptKind::from_key(key).is_none() {
                return Err(Error::Config(format!("unknown prompt key {key:?}")));
            }
        }
        let p = &self.pipeline;
        if p.min_truncated_turns == 0 {
            return Err(Error::Config(
                "min_truncated_turns must be at least 1".into(),
            ));
        }
        if !(p.margin_epsilon > 0.0 && p.margin_epsilon.is_finite()) {
            return Err(Error::Config("margin_epsilon must be positive".into()));
        }
        if self.gateway.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    fn role_specs(&self) -> impl Iterator<Item = &ModelSpec> {
        [
            Some(&self.models.summary),
            Some(&self.models.metric),
            self.models.margin.as_ref(),
        ]
        .into_iter()
        .flatten()
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn model_roles(&self) -> ModelRoles {
        ModelRoles {
            summary: self.models.summary.id.clone(),
            metric: self.models.metric.id.clone(),
            margin: self.models.margin.as_ref().map(|m| m.id.clone()),
        }
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let mut prompts = PromptSet::default();
        for (key, path) in &self.prompts {
            let kind = PromptKind::from_key(key)
                .ok_or_else(|| Error::Config(format!("unknown prompt key {key:?}")))?;
            prompts = prompts.with_override(kind, self.resolve(path))?;
        }
        let p = &self.pipeline;
        Ok(PipelineConfig {
            models: self.model_roles(),
            prompts,
            min_truncated_turns: p.min_truncated_turns,
            repair_budget: p.repair_budget,
            max_output_tokens: p.max_output_tokens,
            temperature: p.temperature,
            uniqueness_scope: p.uniqueness_scope,
            margin_prompt_phrase: p.margin_prompt_phrase.clone(),
            margin_epsilon: p.margin_epsilon,
        })
    }

    /// Cassette path, with `override_path` taking precedence over the file.
    pub fn cassette_path(&self, override_path: Option<&Path>) -> Option<PathBuf> {
        override_path
            .map(Path::to_path_buf)
            .or_else(|| self.gateway.cassette.as_ref().map(|p| self.resolve(p)))
    }

    fn backend(&self, name: &str, spec: &BackendConfig) -> Result<Arc<dyn Backend>> {
        Ok(match &spec.kind {
            BackendKind::Openai {
                base_url,
                api_key_env,
                supports_logprobs,
                timeout_secs,
            } => {
                let api_key = match api_key_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        Error::Config(format!(
                            "backend {name:?} reads its API key from ${var}, which is not set"
                        ))
                    })?),
                    None => None,
                };
                Arc::new(
                    OpenAiBackend::new(OpenAiConfig {
                        base_url: base_url.clone(),
                        api_key,
                        supports_logprobs: *supports_logprobs,
                        timeout: Duration::from_secs(*timeout_secs),
                    })
                    .map_err(|e| Error::Config(format!("backend {name:?}: {e}")))?,
                )
            }
            BackendKind::Mock { script } => {
                Arc::new(MockBackend::new(MockScript::load(self.resolve(script))?))
            }
        })
    }

    /// Builds the gateway. Replay mode constructs no backends, so it needs
    /// neither network access nor credentials.
    pub fn build_gateway(&self, mode: Mode, cassette_override: Option<&Path>) -> Result<Gateway> {
        let mut builder = Gateway::builder(mode)
            .retry(RetryPolicy {
                max_attempts: self.gateway.max_attempts,
                base_delay: Duration::from_millis(self.gateway.backoff_ms),
            })
            .aggregation(self.gateway.aggregation);
        if mode != Mode::Replay {
            for (name, spec) in &self.backends {
                let used = self.role_specs().any(|s| &s.backend == name);
                if used {
                    builder = builder.backend(
                        name.clone(),
                        self.backend(name, spec)?,
                        spec.max_in_flight,
                        Duration::from_millis(spec.min_interval_ms),
                    );
                }
            }
            for spec in self.role_specs() {
                builder = builder.route(spec.id.clone(), spec.backend.clone());
            }
        }
        if mode != Mode::Live {
            let path = self
                .cassette_path(cassette_override)
                .ok_or_else(|| Error::Config(format!("{mode:?} mode needs a cassette path")))?;
            let cassette = if mode == Mode::Replay {
                Cassette::open(&path)?
            } else {
                Cassette::open_for_append(&path)?
            };
            builder = builder.cassette(cassette);
        }
        Ok(builder.build()?)
    }

    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [models.summary]
        id = "gen"
        backend = "mock"
        [models.metric]
        id = "judge"
        backend = "mock"
        [backends.mock]
        kind = "mock"
        script = "script.json"
    "#;

    #[test]
    fn defaults() {
        let c = Config::from_toml(MINIMAL).unwrap();
        assert_eq!(c.pipeline.min_truncated_turns, 6);
        assert_eq!(c.pipeline.repair_budget, 1);
        assert_eq!(c.pipeline.margin_epsilon, 1e-9);
        assert_eq!(c.gateway.max_attempts, 3);
        assert_eq!(c.model_roles().margin, None);
    }

    #[test]
    fn rejects_bad_configs() {
        let undefined = MINIMAL.replace(
            "backend = \"mock\"\n        [models.metric]",
            "backend = \"nope\"\n        [models.metric]",
        );
        assert!(Config::from_toml(&undefined)
            .unwrap_err()
            .to_string()
            .contains("undefined backend"));
        let unknown_key = format!("{MINIMAL}\n[pipeline]\nmin_turns = 3\n");
        assert!(Config::from_toml(&unknown_key).is_err());
        let bad_prompt = format!("{MINIMAL}\n[prompts]\nsumary = \"x.txt\"\n");
        assert!(Config::from_toml(&bad_prompt)
            .unwrap_err()
            .to_string()
            .contains("sumary"));
        let bad_eps = format!("{MINIMAL}\n[pipeline]\nmargin_epsilon = 0.0\n");
        assert!(Config::from_toml(&bad_eps).is_err());
    }

    #[test]
    fn openai_backend_section() {
        let raw = r#"
            [models.summary]
            id = "gpt-4"
            backend = "api"
            [models.metric]
            id = "gpt-4"
            backend = "api"
            [models.margin]
            id = "davinci-002"
            backend = "api"
            [backends.api]
            kind = "openai"
            base_url = "http://localhost:1"
            supports_logprobs = true
            max_in_flight = 2
        "#;
        let c = Config::from_toml(raw).unwrap();
        assert_eq!(c.backends["api"].max_in_flight, 2);
        assert!(matches!(
            c.backends["api"].kind,
            BackendKind::Openai {
                supports_logprobs: true,
                ..
            }
        ));
        c.build_gateway(Mode::Live, None).unwrap();
    }

    #[test]
    fn replay_needs_cassette_but_no_backends() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Config::from_toml(MINIMAL).unwrap();
        c.base_dir = dir.path().to_path_buf();
        assert!(c.build_gateway(Mode::Replay, None).is_err());
        let cassette = dir.path().join("c.jsonl");
        std::fs::write(&cassette, "").unwrap();
        // script.json does not exist; replay must not try to read it
        c.build_gateway(Mode::Replay, Some(&cassette)).unwrap();
        assert!(c.build_gateway(Mode::Record, Some(&cassette)).is_err());
    }
}
