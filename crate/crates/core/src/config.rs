//! The declarative TOML configuration.
//!
//! ```toml
//! [backends]
//! kind = "http"                 # or "mock" for the in-process mock
//! base_url = "http://127.0.0.1:8080"
//! timeout_ms = 30000
//! retries = 2
//! [backends.roles.llm]
//! base_url = "http://llm-relay:9000"
//!
//! [oeg]      # max_examples, best_effort, qg_instruction
//! [mka]      # n, capacity, raw_answer_compare, insert_before_inference
//! [prompt]   # instruction, layout, max_chars
//! [pipeline] # enable_oeg, enable_mka, seed_k, order, snapshot_batch
//! [pipeline.llm]  # max_tokens, temperature, stop_sequences
//! [eval]     # simple_accuracy, format, questions, annotations, ...
//! ```
//!
//! Every key can be overridden with `section.key=value`; values parse as
//! TOML and fall back to plain strings. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::mock::{MockScenario, DEFAULT_FEATURE_DIM};
use crate::backends::{
    BackendClient, BackendConfig, Endpoint, HttpTransport, LlmParams, MockConfig, MockTransport, MockWorld,
    ModelBackends, Role,
};
use crate::eval::EvalConfig;
use crate::mka::MkaConfig;
use crate::oeg::OegConfig;
use crate::pipeline::{PipelineConfig, SampleOrder};
use crate::prompt::PromptConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("bad override {0:?}: expected key=value")]
    Override(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// The deterministic mock, in-process.
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoleOverride {
    pub base_url: Option<String>,
    pub timeout_ms: Option<u64>,
    pub retries: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MockSection {
    pub seed: u64,
    pub feature_dim: usize,
    /// JSON scene table layered over the built-in scenes.
    pub scenario: Option<PathBuf>,
    pub fail_endpoints: Vec<Endpoint>,
}

impl Default for MockSection {
    fn default() -> Self {
        Self { seed: 0, feature_dim: DEFAULT_FEATURE_DIM, scenario: None, fail_endpoints: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendsSection {
    pub kind: BackendKind,
    pub base_url: String,
    pub timeout_ms: u64,
    pub retries: u32,
    /// Backoff before the first retry; doubles each time.
    pub backoff_ms: u64,
    /// Extract candidate answers in-process.
    pub builtin_extractor: bool,
    /// Expected feature length; learned from the first response when unset.
    pub feature_dim: Option<usize>,
    pub roles: BTreeMap<Role, RoleOverride>,
    pub mock: MockSection,
}

impl Default for BackendsSection {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            base_url: "http://127.0.0.1:8080".into(),
            timeout_ms: 30_000,
            retries: 2,
            backoff_ms: 200,
            builtin_extractor: false,
            feature_dim: None,
            roles: BTreeMap::new(),
            mock: MockSection::default(),
        }
    }
}

impl BackendsSection {
    /// One config per role with overrides applied.
    pub fn role_configs(&self) -> Vec<BackendConfig> {
        Role::ALL
            .iter()
            .map(|&role| {
                let o = self.roles.get(&role).cloned().unwrap_or_default();
                BackendConfig {
                    role,
                    base_url: o.base_url.unwrap_or_else(|| self.base_url.clone()),
                    timeout_ms: o.timeout_ms.unwrap_or(self.timeout_ms),
                    retries: o.retries.unwrap_or(self.retries),
                }
            })
            .collect()
    }

    pub fn mock_config(&self) -> Result<MockConfig, ConfigError> {
        let mut cfg = MockConfig::new(self.mock.seed, self.mock.feature_dim);
        if let Some(path) = &self.mock.scenario {
            cfg = cfg.with_scenario(load_scenario(path)?);
        }
        for &e in &self.mock.fail_endpoints {
            cfg = cfg.failing(e);
        }
        Ok(cfg)
    }
}

pub fn load_scenario(path: &Path) -> Result<MockScenario, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    pub enable_oeg: bool,
    pub enable_mka: bool,
    pub seed_k: usize,
    pub order: SampleOrder,
    pub snapshot_batch: Option<usize>,
    pub llm: LlmParams,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            enable_oeg: p.enable_oeg,
            enable_mka: p.enable_mka,
            seed_k: p.seed_k,
            order: p.order,
            snapshot_batch: p.snapshot_batch,
            llm: p.llm,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    pub backends: BackendsSection,
    pub oeg: OegConfig,
    pub mka: MkaConfig,
    pub prompt: PromptConfig,
    pub pipeline: PipelineSection,
    pub eval: EvalConfig,
}

/// A ready backend client, plus the mock world when running in-process.
pub struct Backends {
    pub client: Box<dyn ModelBackends>,
    pub mock: Option<Arc<MockWorld>>,
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), String> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("bad key {key:?}"));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut table = root;
    for p in parents {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| format!("{key}: {p} is not a table"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

impl AppConfig {
    /// Parses `text` and applies `key=value` overrides in order.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut root: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            let (key, value) = o.split_once('=').ok_or_else(|| ConfigError::Override(o.clone()))?;
            set_path(&mut root, key.trim(), parse_value(value.trim())).map_err(ConfigError::Invalid)?;
        }
        let cfg: AppConfig = toml::Value::Table(root).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or starts from defaults) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.display().to_string(), source })?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pipeline_config().validate().map_err(ConfigError::Invalid)?;
        if self.backends.kind == BackendKind::Http {
            for c in self.backends.role_configs() {
                c.validate().map_err(|e| ConfigError::Invalid(format!("backends ({}): {e}", c.role)))?;
            }
        }
        if self.backends.mock.feature_dim == 0 {
            return Err(ConfigError::Invalid("backends.mock.feature_dim must be at least 1".into()));
        }
        Ok(())
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        let p = &self.pipeline;
        PipelineConfig {
            enable_oeg: p.enable_oeg,
            enable_mka: p.enable_mka,
            seed_k: p.seed_k,
            order: p.order,
            snapshot_batch: p.snapshot_batch,
            llm: p.llm.clone(),
            oeg: self.oeg.clone(),
            mka: self.mka.clone(),
            prompt: self.prompt.clone(),
            eval: self.eval.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    /// Builds the client. `api_key` is sent to the LLM role only.
    pub fn build_backends(&self, api_key: Option<String>) -> Result<Backends, ConfigError> {
        let b = &self.backends;
        let configs = b.role_configs();
        let backoff = Duration::from_millis(b.backoff_ms);
        let (client, mock): (Box<dyn ModelBackends>, _) = match b.kind {
            BackendKind::Mock => {
                let world = Arc::new(MockWorld::new(b.mock_config()?));
                let mut c = BackendClient::from_configs(MockTransport(world.clone()), &configs)
                    .with_initial_backoff(backoff)
                    .with_builtin_extractor(b.builtin_extractor);
                if let Some(d) = b.feature_dim {
                    c = c.with_feature_dim(d);
                }
                (Box::new(c), Some(world))
            }
            BackendKind::Http => {
                let transport = HttpTransport::new(&configs, api_key).map_err(ConfigError::Invalid)?;
                let mut c = BackendClient::from_configs(transport, &configs)
                    .with_initial_backoff(backoff)
                    .with_builtin_extractor(b.builtin_extractor);
                if let Some(d) = b.feature_dim {
                    c = c.with_feature_dim(d);
                }
                (Box::new(c), None)
            }
        };
        Ok(Backends { client, mock })
    }
}
