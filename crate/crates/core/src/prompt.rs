//! Prompt assembly and completion parsing.
//!
//! Layout of a rendered prompt:
//!
//! ```text
//! {instruction}
//! Context: {global caption}
//! <examples: object examples first, then memory examples>
//! Question: {question}
//! Answer:
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::normalize_answer;
use crate::types::Example;

pub const DEFAULT_INSTRUCTION: &str =
    "Please answer the question according to the context. Answer with a short phrase.";
pub const DEFAULT_MAX_CHARS: usize = 12_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptLayout {
    /// `Context/Question/Answer` per example.
    #[default]
    #[serde(alias = "cqa-cqa-cqa")]
    CqaInterleaved,
    /// All contexts, then all question/answer pairs.
    #[serde(alias = "ccc-qaqaqa")]
    BlockCaptionsThenQas,
}

impl PromptLayout {
    pub const ALL: [PromptLayout; 2] = [PromptLayout::CqaInterleaved, PromptLayout::BlockCaptionsThenQas];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptLayout::CqaInterleaved => "cqa_interleaved",
            PromptLayout::BlockCaptionsThenQas => "block_captions_then_qas",
        }
    }

    /// Short label used in reports.
    pub fn short_label(self) -> &'static str {
        match self {
            PromptLayout::CqaInterleaved => "CQA-CQA-CQA",
            PromptLayout::BlockCaptionsThenQas => "CCC-QAQAQA",
        }
    }
}

impl fmt::Display for PromptLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptLayout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cqa_interleaved" | "cqa-cqa-cqa" | "cqa" => Ok(PromptLayout::CqaInterleaved),
            "block_captions_then_qas" | "ccc-qaqaqa" | "block" => Ok(PromptLayout::BlockCaptionsThenQas),
            other => Err(format!("unknown prompt layout {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptConfig {
    pub instruction: String,
    pub layout: PromptLayout,
    pub max_chars: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self { instruction: DEFAULT_INSTRUCTION.into(), layout: PromptLayout::default(), max_chars: DEFAULT_MAX_CHARS }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("question must not be empty")]
    EmptyQuestion,
    #[error("global caption must not be empty")]
    EmptyCaption,
    #[error(
        "prompt needs {needed} characters but the budget is {limit}; \
         {fits_object} object and {fits_memory} memory examples fit"
    )]
    BudgetExceeded { limit: usize, needed: usize, fits_object: usize, fits_memory: usize },
    #[error("completion has no answer")]
    EmptyCompletion,
}

/// Instruction, global caption, object examples, memory examples and the
/// question, in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OadPrompt {
    pub instruction: String,
    pub global_caption: String,
    pub object_examples: Vec<Example>,
    pub memory_examples: Vec<Example>,
    pub question: String,
    pub layout: PromptLayout,
}

impl OadPrompt {
    pub fn examples(&self) -> impl Iterator<Item = &Example> {
        self.object_examples.iter().chain(&self.memory_examples)
    }

    /// True when no memory examples are present.
    pub fn is_initial_form(&self) -> bool {
        self.memory_examples.is_empty()
    }
}

fn one_line(s: &str) -> String {
    s.replace("\r\n", " ").replace(['\n', '\r'], " ")
}

pub fn render_prompt(p: &OadPrompt) -> String {
    let mut out = String::new();
    out.push_str(&one_line(&p.instruction));
    out.push('\n');
    out.push_str("Context: ");
    out.push_str(&one_line(&p.global_caption));
    out.push('\n');
    let push_context = |out: &mut String, e: &Example| {
        out.push_str("Context: ");
        out.push_str(&one_line(e.caption.text()));
        out.push('\n');
    };
    let push_qa = |out: &mut String, e: &Example| {
        out.push_str("Question: ");
        out.push_str(&one_line(e.qa.question()));
        out.push_str("\nAnswer: ");
        out.push_str(&one_line(e.qa.answer()));
        out.push('\n');
    };
    match p.layout {
        PromptLayout::CqaInterleaved => {
            for e in p.examples() {
                push_context(&mut out, e);
                push_qa(&mut out, e);
            }
        }
        PromptLayout::BlockCaptionsThenQas => {
            for e in p.examples() {
                push_context(&mut out, e);
            }
            for e in p.examples() {
                push_qa(&mut out, e);
            }
        }
    }
    out.push_str("Question: ");
    out.push_str(&one_line(&p.question));
    out.push_str("\nAnswer:");
    out
}

fn rendered_len(
    cfg: &PromptConfig,
    global_caption: &str,
    object: &[Example],
    memory: &[Example],
    question: &str,
) -> usize {
    // Both layouts emit the same lines, so the length depends only on content.
    let line = |s: &str| one_line(s).chars().count();
    let example = |e: &Example| {
        "Context: \n".len() + line(e.caption.text()) + "Question: \nAnswer: \n".len() + line(e.qa.question()) + line(e.qa.answer())
    };
    line(&cfg.instruction) + 1 + "Context: \n".len() + line(global_caption)
        + object.iter().chain(memory).map(example).sum::<usize>()
        + "Question: \nAnswer:".len()
        + line(question)
}

/// Largest `(object, memory)` prefix counts within the budget, dropping
/// memory examples from the tail before object examples.
fn fitting_counts(cfg: &PromptConfig, global_caption: &str, object: &[Example], memory: &[Example], question: &str) -> (usize, usize) {
    let fits = |o: usize, m: usize| rendered_len(cfg, global_caption, &object[..o], &memory[..m], question) <= cfg.max_chars;
    let mut m = memory.len();
    while m > 0 && !fits(object.len(), m) {
        m -= 1;
    }
    if fits(object.len(), m) {
        return (object.len(), m);
    }
    let mut o = object.len();
    while o > 0 && !fits(o, 0) {
        o -= 1;
    }
    (o, 0)
}

fn validate(global_caption: &str, question: &str) -> Result<(), PromptError> {
    if question.trim().is_empty() {
        return Err(PromptError::EmptyQuestion);
    }
    if global_caption.trim().is_empty() {
        return Err(PromptError::EmptyCaption);
    }
    Ok(())
}

/// Builds the prompt, failing when it would exceed `cfg.max_chars`.
pub fn build_prompt(
    cfg: &PromptConfig,
    global_caption: &str,
    object: &[Example],
    memory: &[Example],
    question: &str,
) -> Result<OadPrompt, PromptError> {
    validate(global_caption, question)?;
    let needed = rendered_len(cfg, global_caption, object, memory, question);
    if needed > cfg.max_chars {
        let (fits_object, fits_memory) = fitting_counts(cfg, global_caption, object, memory, question);
        return Err(PromptError::BudgetExceeded { limit: cfg.max_chars, needed, fits_object, fits_memory });
    }
    Ok(OadPrompt {
        instruction: cfg.instruction.clone(),
        global_caption: global_caption.to_owned(),
        object_examples: object.to_vec(),
        memory_examples: memory.to_vec(),
        question: question.to_owned(),
        layout: cfg.layout,
    })
}

/// Like [`build_prompt`] but drops examples until the prompt fits. Fails
/// only if the prompt with no examples is still too long.
pub fn build_prompt_truncated(
    cfg: &PromptConfig,
    global_caption: &str,
    object: &[Example],
    memory: &[Example],
    question: &str,
) -> Result<OadPrompt, PromptError> {
    validate(global_caption, question)?;
    let (o, m) = fitting_counts(cfg, global_caption, object, memory, question);
    build_prompt(cfg, global_caption, &object[..o], &memory[..m], question)
}

/// First line of the completion, cut at the first stop sequence, normalized.
pub fn extract_answer(completion: &str, stop: &[String]) -> Result<String, PromptError> {
    let mut line = completion.trim_start_matches([' ', '\t']).lines().next().unwrap_or("");
    for s in stop.iter().filter(|s| !s.is_empty()) {
        if let Some(pos) = line.find(s.as_str()) {
            line = &line[..pos];
        }
    }
    let answer = normalize_answer(line);
    if answer.is_empty() {
        Err(PromptError::EmptyCompletion)
    } else {
        Ok(answer)
    }
}
