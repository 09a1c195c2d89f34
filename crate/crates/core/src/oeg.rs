//! Object-concentrated example generation.
//!
//! The image gets one global caption plus one caption per detected region.
//! Candidate answers are pulled out of each regional caption and a question
//! is generated for each, giving `(caption, question, answer)` examples.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, ModelBackends};
use crate::types::{Caption, Example, ExampleSource, ImageRef, QAPair};

pub const DEFAULT_QG_INSTRUCTION: &str = "Generate a question whose answer is: {answer}. Context: {caption}";
pub const DEFAULT_MAX_EXAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OegConfig {
    pub max_examples: usize,
    /// Keep going past per-item failures and report them.
    pub best_effort: bool,
    /// `{answer}` and `{caption}` are substituted.
    pub qg_instruction: String,
    pub questions_per_answer: usize,
}

impl Default for OegConfig {
    fn default() -> Self {
        Self {
            max_examples: DEFAULT_MAX_EXAMPLES,
            best_effort: false,
            qg_instruction: DEFAULT_QG_INSTRUCTION.into(),
            questions_per_answer: 1,
        }
    }
}

impl OegConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_examples == 0 {
            return Err("oeg.max_examples must be at least 1".into());
        }
        if self.questions_per_answer != 1 {
            return Err("oeg.questions_per_answer: only 1 is supported".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OegOutput {
    pub global_caption: Caption,
    pub object_examples: Vec<Example>,
}

/// A failure tied to one region (and answer, for question generation).
#[derive(Debug, Clone, PartialEq)]
pub struct ItemError {
    pub region: usize,
    pub answer: Option<String>,
    pub error: BackendError,
}

#[derive(Debug, Error)]
pub enum OegError {
    #[error("{stage}: {source}")]
    Backend { stage: &'static str, source: BackendError },
    #[error("{} item(s) failed; {} example(s) built", errors.len(), output.object_examples.len())]
    PartialFailure { output: Box<OegOutput>, errors: Vec<ItemError> },
    #[error("{0}")]
    Config(String),
}

impl OegError {
    /// Whatever was built before or despite the failure.
    pub fn partial_output(&self) -> Option<&OegOutput> {
        match self {
            OegError::PartialFailure { output, .. } => Some(output),
            _ => None,
        }
    }
}

pub fn render_instruction(template: &str, answer: &str, caption: &str) -> String {
    template.replace("{answer}", answer).replace("{caption}", caption)
}

struct Builder<'a> {
    backends: &'a dyn ModelBackends,
    cfg: &'a OegConfig,
    image: &'a ImageRef,
    sample_id: Option<&'a str>,
    source: ExampleSource,
    seen: HashSet<String>,
    examples: Vec<Example>,
    errors: Vec<ItemError>,
}

impl Builder<'_> {
    fn full(&self) -> bool {
        self.examples.len() >= self.cfg.max_examples
    }

    fn fail(&mut self, stage: &'static str, item: ItemError) -> Result<(), OegError> {
        if self.cfg.best_effort {
            log::warn!("oeg {stage} failed for region {}: {}", item.region, item.error);
            self.errors.push(item);
            Ok(())
        } else {
            Err(OegError::Backend { stage, source: item.error })
        }
    }

    fn add_caption(&mut self, region: usize, caption: &Caption) -> Result<(), OegError> {
        let answers = match self.backends.extract_answers(caption) {
            Ok(a) => a,
            Err(error) => return self.fail("extract_answers", ItemError { region, answer: None, error }),
        };
        for answer in answers {
            if self.full() {
                break;
            }
            if !self.seen.insert(answer.trim().to_lowercase()) {
                continue;
            }
            let instruction = render_instruction(&self.cfg.qg_instruction, &answer, caption.text());
            let question = match self.backends.generate_question(&instruction, &answer, caption) {
                Ok(q) => q,
                Err(error) => {
                    self.fail("generate_question", ItemError { region, answer: Some(answer), error })?;
                    continue;
                }
            };
            let qa = match QAPair::new(question, answer.clone()) {
                Ok(qa) => qa,
                Err(e) => {
                    let error = BackendError::Precondition(format!("invalid generated pair: {e}"));
                    self.fail("generate_question", ItemError { region, answer: Some(answer), error })?;
                    continue;
                }
            };
            self.examples.push(
                Example::new(caption.clone(), qa, self.source)
                    .with_origin(self.sample_id.map(str::to_owned), Some(self.image.clone())),
            );
        }
        Ok(())
    }

    fn finish(self, global_caption: Caption) -> Result<OegOutput, OegError> {
        let output = OegOutput { global_caption, object_examples: self.examples };
        if self.errors.is_empty() {
            Ok(output)
        } else {
            Err(OegError::PartialFailure { output: Box::new(output), errors: self.errors })
        }
    }
}

fn builder<'a>(
    backends: &'a dyn ModelBackends,
    image: &'a ImageRef,
    cfg: &'a OegConfig,
    sample_id: Option<&'a str>,
    source: ExampleSource,
) -> Result<Builder<'a>, OegError> {
    cfg.validate().map_err(OegError::Config)?;
    Ok(Builder { backends, cfg, image, sample_id, source, seen: HashSet::new(), examples: Vec::new(), errors: Vec::new() })
}

/// Global caption plus examples built from the regional captions, in
/// region order then answer order, at most `cfg.max_examples`.
pub fn run_oeg(
    backends: &dyn ModelBackends,
    image: &ImageRef,
    cfg: &OegConfig,
    sample_id: Option<&str>,
) -> Result<OegOutput, OegError> {
    let mut b = builder(backends, image, cfg, sample_id, ExampleSource::ObjectConcentrated)?;
    let global = backends
        .caption_global(image)
        .map_err(|source| OegError::Backend { stage: "caption_global", source })?;
    match backends.caption_regions(image) {
        Ok(regions) => {
            for (i, caption) in regions.iter().enumerate() {
                if b.full() {
                    break;
                }
                b.add_caption(i, caption)?;
            }
        }
        Err(error) => b.fail("caption_regions", ItemError { region: 0, answer: None, error })?,
    }
    b.finish(global)
}

/// Substitute used when region-level generation is switched off: examples
/// are built from the global caption alone.
pub fn global_caption_examples(
    backends: &dyn ModelBackends,
    image: &ImageRef,
    cfg: &OegConfig,
    sample_id: Option<&str>,
) -> Result<OegOutput, OegError> {
    let mut b = builder(backends, image, cfg, sample_id, ExampleSource::GlobalCaption)?;
    let global = backends
        .caption_global(image)
        .map_err(|source| OegError::Backend { stage: "caption_global", source })?;
    b.add_caption(0, &global)?;
    b.finish(global)
}
