//! Domain types shared across the engine.
//!
//! Every type here validates its invariants at construction and on
//! deserialization, so a value that exists is a value that is valid.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("bounding box must have positive width and height, got w={w} h={h}")]
    DegenerateBox { w: f64, h: f64 },
    #[error("feature vector contains a non-finite value at position {0}")]
    NonFinite(usize),
    #[error("object-concentrated caption requires a region")]
    MissingRegion,
    #[error("global caption must not carry a region")]
    UnexpectedRegion,
}

/// Opaque image handle. The engine never touches pixels; `uri` is passed
/// verbatim to backends.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ImageRefRepr")]
pub struct ImageRef {
    pub id: String,
    pub uri: String,
}

#[derive(Deserialize)]
struct ImageRefRepr {
    id: String,
    uri: String,
}

impl TryFrom<ImageRefRepr> for ImageRef {
    type Error = ValidationError;
    fn try_from(r: ImageRefRepr) -> Result<Self, Self::Error> {
        ImageRef::new(r.id, r.uri)
    }
}

impl ImageRef {
    /// The uri may be empty here; backends reject such requests.
    pub fn new(id: impl Into<String>, uri: impl Into<String>) -> Result<Self, ValidationError> {
        let id = id.into();
        if id.is_empty() {
            return Err(ValidationError::Empty("image id"));
        }
        Ok(Self { id, uri: uri.into() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionRepr")]
pub struct RegionDescriptor {
    pub label: String,
    /// `[x, y, w, h]` in pixels.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
}

#[derive(Deserialize)]
struct RegionRepr {
    label: String,
    #[serde(default)]
    bbox: Option<[f64; 4]>,
}

impl TryFrom<RegionRepr> for RegionDescriptor {
    type Error = ValidationError;
    fn try_from(r: RegionRepr) -> Result<Self, Self::Error> {
        RegionDescriptor::new(r.label, r.bbox)
    }
}

impl RegionDescriptor {
    pub fn new(label: impl Into<String>, bbox: Option<[f64; 4]>) -> Result<Self, ValidationError> {
        if let Some([_, _, w, h]) = bbox {
            // NaN fails both comparisons and is rejected too.
            if !(w > 0.0 && h > 0.0) {
                return Err(ValidationError::DegenerateBox { w, h });
            }
        }
        Ok(Self { label: label.into(), bbox })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionKind {
    Global,
    ObjectConcentrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CaptionRepr")]
pub struct Caption {
    text: String,
    kind: CaptionKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    region: Option<RegionDescriptor>,
}

#[derive(Deserialize)]
struct CaptionRepr {
    text: String,
    kind: CaptionKind,
    #[serde(default)]
    region: Option<RegionDescriptor>,
}

impl TryFrom<CaptionRepr> for Caption {
    type Error = ValidationError;
    fn try_from(r: CaptionRepr) -> Result<Self, Self::Error> {
        match (r.kind, r.region) {
            (CaptionKind::Global, None) => Caption::global(r.text),
            (CaptionKind::Global, Some(_)) => Err(ValidationError::UnexpectedRegion),
            (CaptionKind::ObjectConcentrated, Some(region)) => Caption::object(r.text, region),
            (CaptionKind::ObjectConcentrated, None) => Err(ValidationError::MissingRegion),
        }
    }
}

impl Caption {
    pub fn global(text: impl Into<String>) -> Result<Self, ValidationError> {
        let text = non_empty(text.into(), "caption text")?;
        Ok(Self { text, kind: CaptionKind::Global, region: None })
    }

    pub fn object(text: impl Into<String>, region: RegionDescriptor) -> Result<Self, ValidationError> {
        let text = non_empty(text.into(), "caption text")?;
        Ok(Self { text, kind: CaptionKind::ObjectConcentrated, region: Some(region) })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn kind(&self) -> CaptionKind {
        self.kind
    }

    pub fn region(&self) -> Option<&RegionDescriptor> {
        self.region.as_ref()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "QaRepr")]
pub struct QAPair {
    question: String,
    answer: String,
}

#[derive(Deserialize)]
struct QaRepr {
    question: String,
    answer: String,
}

impl TryFrom<QaRepr> for QAPair {
    type Error = ValidationError;
    fn try_from(r: QaRepr) -> Result<Self, Self::Error> {
        QAPair::new(r.question, r.answer)
    }
}

impl QAPair {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Result<Self, ValidationError> {
        Ok(Self {
            question: non_empty(question.into(), "question")?,
            answer: non_empty(answer.into(), "answer")?,
        })
    }

    pub fn question(&self) -> &str {
        &self.question
    }

    pub fn answer(&self) -> &str {
        &self.answer
    }
}

/// Fused visual-language feature. Finite entries, at least one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = ValidationError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        FeatureVector::new(v)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(f: FeatureVector) -> Self {
        f.0
    }
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ValidationError> {
        if values.is_empty() {
            return Err(ValidationError::Empty("feature vector"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(ValidationError::NonFinite(pos));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Result<Self, ValidationError> {
        Self::new(self.0.iter().map(|v| v * s).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleSource {
    ObjectConcentrated,
    /// Built from the global caption when object-concentrated generation is
    /// disabled.
    GlobalCaption,
    MemorySeed,
}

/// A (caption, question, answer) triple with its retrieval feature and
/// provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub caption: Caption,
    pub qa: QAPair,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<FeatureVector>,
    pub source: ExampleSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_sample_id: Option<String>,
    /// Image the example was derived from; needed to embed it lazily.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_image: Option<ImageRef>,
}

impl Example {
    pub fn new(caption: Caption, qa: QAPair, source: ExampleSource) -> Self {
        Self { caption, qa, feature: None, source, origin_sample_id: None, origin_image: None }
    }

    pub fn with_feature(mut self, feature: FeatureVector) -> Self {
        self.feature = Some(feature);
        self
    }

    pub fn with_origin(mut self, sample_id: Option<String>, image: Option<ImageRef>) -> Self {
        self.origin_sample_id = sample_id;
        self.origin_image = image;
        self
    }

    /// Identity used for deduplication: the literal (C, Q, A) strings.
    pub fn triple_key(&self) -> (String, String, String) {
        (
            self.caption.text().to_owned(),
            self.qa.question().to_owned(),
            self.qa.answer().to_owned(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Retrieve the most similar stored examples.
    Positive,
    /// Retrieve the least similar stored examples.
    Negative,
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionMode::Positive => f.write_str("positive"),
            SelectionMode::Negative => f.write_str("negative"),
        }
    }
}

/// Biased (question-only) and ordinary (image + question) answers for one
/// input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerPair {
    pub biased: String,
    pub ordinary: String,
}

impl AnswerPair {
    pub fn new(biased: impl Into<String>, ordinary: impl Into<String>) -> Self {
        Self { biased: biased.into(), ordinary: ordinary.into() }
    }
}

fn non_empty(s: String, what: &'static str) -> Result<String, ValidationError> {
    if s.trim().is_empty() {
        Err(ValidationError::Empty(what))
    } else {
        Ok(s)
    }
}
