//! Model roles behind a JSON-over-HTTP wire protocol.
//!
//! The engine talks to every model (captioners, answer extractor, question
//! generator, QA, VQA and LLM) through [`ModelBackends`]. The one
//! implementation, [`BackendClient`], speaks the protocol in [`protocol`]
//! over a pluggable [`Transport`]: real HTTP for deployed adapters or the
//! in-process [`mock`] for tests.

pub mod client;
pub mod conformance;
pub mod extract;
pub mod mock;
pub mod protocol;
pub mod server;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Caption, FeatureVector, ImageRef, RegionDescriptor};

pub use client::{BackendClient, HttpTransport, RawResponse, Transport};
pub use mock::{MockConfig, MockTransport, MockWorld};

/// The seven model roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    GlobalCaptioner,
    RegionalCaptioner,
    AnswerExtractor,
    QuestionGenerator,
    QaModel,
    VqaModel,
    Llm,
}

impl Role {
    pub const ALL: [Role; 7] = [
        Role::GlobalCaptioner,
        Role::RegionalCaptioner,
        Role::AnswerExtractor,
        Role::QuestionGenerator,
        Role::QaModel,
        Role::VqaModel,
        Role::Llm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::GlobalCaptioner => "global_captioner",
            Role::RegionalCaptioner => "regional_captioner",
            Role::AnswerExtractor => "answer_extractor",
            Role::QuestionGenerator => "question_generator",
            Role::QaModel => "qa_model",
            Role::VqaModel => "vqa_model",
            Role::Llm => "llm",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One POST endpoint of the protocol. The VQA role serves two of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    CaptionGlobal,
    CaptionRegions,
    Extract,
    GenerateQuestion,
    Qa,
    Vqa,
    Embed,
    Llm,
}

impl Endpoint {
    pub const ALL: [Endpoint; 8] = [
        Endpoint::CaptionGlobal,
        Endpoint::CaptionRegions,
        Endpoint::Extract,
        Endpoint::GenerateQuestion,
        Endpoint::Qa,
        Endpoint::Vqa,
        Endpoint::Embed,
        Endpoint::Llm,
    ];

    pub fn path(self) -> &'static str {
        match self {
            Endpoint::CaptionGlobal => "/v1/caption/global",
            Endpoint::CaptionRegions => "/v1/caption/regions",
            Endpoint::Extract => "/v1/extract",
            Endpoint::GenerateQuestion => "/v1/generate_question",
            Endpoint::Qa => "/v1/qa",
            Endpoint::Vqa => "/v1/vqa",
            Endpoint::Embed => "/v1/embed",
            Endpoint::Llm => "/v1/llm",
        }
    }

    pub fn role(self) -> Role {
        match self {
            Endpoint::CaptionGlobal => Role::GlobalCaptioner,
            Endpoint::CaptionRegions => Role::RegionalCaptioner,
            Endpoint::Extract => Role::AnswerExtractor,
            Endpoint::GenerateQuestion => Role::QuestionGenerator,
            Endpoint::Qa => Role::QaModel,
            Endpoint::Vqa | Endpoint::Embed => Role::VqaModel,
            Endpoint::Llm => Role::Llm,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.path())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("{endpoint}: transport error: {message}")]
    Transport { endpoint: Endpoint, message: String },
    #[error("{endpoint}: protocol error: {message}")]
    Protocol { endpoint: Endpoint, message: String },
    #[error("{endpoint}: backend error: {message}")]
    Backend { endpoint: Endpoint, message: String },
    #[error("{endpoint}: rate limited")]
    RateLimited { endpoint: Endpoint },
    #[error("{endpoint}: backend returned an empty generation")]
    EmptyGeneration { endpoint: Endpoint },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("feature dimension mismatch: run uses {expected}, backend returned {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport { .. } | BackendError::RateLimited { .. })
    }
}

/// Connection settings for one role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub role: Role,
    pub base_url: String,
    pub timeout_ms: u64,
    pub retries: u32,
}

impl BackendConfig {
    pub fn new(role: Role, base_url: impl Into<String>) -> Self {
        Self { role, base_url: base_url.into(), timeout_ms: 30_000, retries: 2 }
    }

    pub fn validate(&self) -> Result<(), String> {
        let url = url::Url::parse(&self.base_url)
            .map_err(|e| format!("{}: base_url {:?} is not an absolute URL: {e}", self.role, self.base_url))?;
        if url.cannot_be_a_base() {
            return Err(format!("{}: base_url {:?} cannot be a base", self.role, self.base_url));
        }
        if self.timeout_ms == 0 {
            return Err(format!("{}: timeout_ms must be positive", self.role));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmParams {
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop_sequences: Vec<String>,
}

impl Default for LlmParams {
    fn default() -> Self {
        Self { max_tokens: 16, temperature: 0.0, stop_sequences: vec!["\n".to_owned()] }
    }
}

impl LlmParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_tokens == 0 {
            return Err("llm.max_tokens must be positive".into());
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err("llm.temperature must be a non-negative number".into());
        }
        Ok(())
    }
}

/// Ordinary answer and fused feature from the VQA model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaPrediction {
    pub answer: String,
    pub feature: FeatureVector,
}

/// All model roles the engine needs. Implementations must be shareable
/// across threads.
pub trait ModelBackends: Send + Sync {
    fn caption_global(&self, image: &ImageRef) -> Result<Caption, BackendError>;

    /// Object-concentrated captions in backend order; may be empty.
    fn caption_regions(&self, image: &ImageRef) -> Result<Vec<Caption>, BackendError>;

    /// Candidate answers, deduplicated in first-seen order.
    fn extract_answers(&self, caption: &Caption) -> Result<Vec<String>, BackendError>;

    fn generate_question(&self, instruction: &str, answer: &str, caption: &Caption) -> Result<String, BackendError>;

    /// Question-only prediction. Nothing visual is sent.
    fn qa_predict(&self, question: &str) -> Result<String, BackendError>;

    fn vqa_predict(&self, image: &ImageRef, question: &str) -> Result<VqaPrediction, BackendError>;

    fn embed_example(
        &self,
        image: &ImageRef,
        region: Option<&RegionDescriptor>,
        question: &str,
    ) -> Result<FeatureVector, BackendError>;

    fn llm_complete(&self, prompt: &str, params: &LlmParams) -> Result<String, BackendError>;
}

/// Pins the feature dimension to the first value observed.
#[derive(Debug, Default)]
pub struct DimensionGuard(AtomicUsize);

impl DimensionGuard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fixed(dim: usize) -> Self {
        Self(AtomicUsize::new(dim))
    }

    pub fn get(&self) -> Option<usize> {
        match self.0.load(Ordering::Acquire) {
            0 => None,
            d => Some(d),
        }
    }

    pub fn check(&self, dim: usize) -> Result<(), BackendError> {
        match self.0.compare_exchange(0, dim, Ordering::AcqRel, Ordering::Acquire) {
            Ok(_) => Ok(()),
            Err(expected) if expected == dim => Ok(()),
            Err(expected) => Err(BackendError::DimensionMismatch { expected, got: dim }),
        }
    }
}
