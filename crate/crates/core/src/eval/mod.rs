//! Scoring, dataset loading, reports and the ablation runner.

pub mod ablation;
pub mod accuracy;
pub mod dataset;
pub mod report;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ablation::{run_ablation, AblationCell, CellOutcome, CellResult, GridKind};
pub use accuracy::{soft_accuracy, ANNOTATORS};
pub use dataset::{load_dataset, DatasetError, DatasetFormat, VqaSample};
pub use report::{render_table, EvalReport, SampleScore};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("expected {ANNOTATORS} human answers, got {0}")]
    AnnotationCount(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Score with `min(k/3, 1)` instead of the subset-averaged form.
    pub simple_accuracy: bool,
    pub format: DatasetFormat,
    pub questions: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub image_uri_template: String,
    /// When no questions file is given, generate this many samples from the
    /// mock.
    pub synthetic_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            simple_accuracy: false,
            format: DatasetFormat::Vqa,
            questions: None,
            annotations: None,
            image_uri_template: "{image_id}".into(),
            synthetic_samples: 20,
        }
    }
}
