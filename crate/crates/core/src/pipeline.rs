//! Per-sample and per-dataset orchestration.
//!
//! For each sample: generate examples from the image, choose a selection
//! mode and retrieve from memory, build and send the prompt, parse the
//! answer, then add the sample's examples to memory. Samples run in order
//! by default because each one can see everything inserted before it.

use std::fs;
use std::io;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backends::{LlmParams, ModelBackends};
use crate::eval::report::{to_jsonl, EvalReport};
use crate::eval::{soft_accuracy, EvalConfig, VqaSample};
use crate::mka::{memory_insert, memory_seed, run_mka, MemoryStore, MkaConfig};
use crate::oeg::{global_caption_examples, run_oeg, OegConfig, OegError, OegOutput};
use crate::prompt::{build_prompt_truncated, extract_answer, render_prompt, PromptConfig};
use crate::types::{Example, ExampleSource, SelectionMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleOrder {
    #[default]
    AsGiven,
    Reversed,
}

impl SampleOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleOrder::AsGiven => "as_given",
            SampleOrder::Reversed => "reversed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// When off, examples are built from the global caption instead.
    pub enable_oeg: bool,
    pub enable_mka: bool,
    /// Examples placed in memory before the first sample.
    pub seed_k: usize,
    pub order: SampleOrder,
    /// Run batches of this size in parallel against a frozen memory,
    /// inserting at the end of each batch.
    pub snapshot_batch: Option<usize>,
    pub llm: LlmParams,
    pub oeg: OegConfig,
    pub mka: MkaConfig,
    pub prompt: PromptConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            enable_oeg: true,
            enable_mka: true,
            seed_k: 0,
            order: SampleOrder::AsGiven,
            snapshot_batch: None,
            llm: LlmParams::default(),
            oeg: OegConfig::default(),
            mka: MkaConfig::default(),
            prompt: PromptConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.oeg.validate()?;
        self.mka.validate()?;
        self.llm.validate()?;
        if self.prompt.max_chars == 0 {
            return Err("prompt.max_chars must be at least 1".into());
        }
        match self.snapshot_batch {
            Some(0) => return Err("pipeline.snapshot_batch must be at least 1".into()),
            Some(_) if self.mka.insert_before_inference => {
                return Err("pipeline.snapshot_batch cannot be combined with mka.insert_before_inference".into())
            }
            _ => {}
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        let flag = |b: bool| if b { "on" } else { "off" };
        format!(
            "oeg={} mka={} k={} layout={} order={}",
            flag(self.enable_oeg),
            flag(self.enable_mka),
            self.seed_k,
            self.prompt.layout.short_label(),
            self.order.as_str()
        )
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no samples to run")]
    EmptyDataset,
    #[error("memory seeding failed: {0}")]
    Seed(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Answered,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Oeg,
    Mka,
    Prompt,
    Llm,
    Extract,
    Memory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub source: ExampleSource,
    pub region: Option<String>,
    pub caption: String,
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedRecord {
    pub index: usize,
    pub similarity: f64,
    pub origin_sample_id: Option<String>,
    pub caption: String,
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MkaRecord {
    pub qa_answer: String,
    pub vqa_answer: String,
    pub mode: SelectionMode,
    pub selected: Vec<SelectedRecord>,
}

/// Memory size around this sample's insertion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryDelta {
    pub before: usize,
    /// Every retrieved index is below this value.
    pub next_index_before: usize,
    pub committed: bool,
    pub inserted: usize,
    pub duplicates: usize,
    pub evicted: usize,
    pub insert_failures: usize,
    pub after: usize,
}

/// Everything needed to audit one inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTranscript {
    pub sample_id: String,
    pub question_id: u64,
    pub image_id: String,
    pub question: String,
    pub status: SampleStatus,
    pub global_caption: Option<String>,
    pub object_examples: Vec<ExampleRecord>,
    pub mka: Option<MkaRecord>,
    pub object_examples_used: usize,
    pub memory_examples_used: usize,
    pub prompt: Option<String>,
    pub completion: Option<String>,
    pub answer: Option<String>,
    pub score: Option<f64>,
    pub memory: MemoryDelta,
    pub errors: Vec<StageError>,
}

impl SampleTranscript {
    fn new(sample: &VqaSample) -> Self {
        Self {
            sample_id: sample.sample_id(),
            question_id: sample.question_id,
            image_id: sample.image.id.clone(),
            question: sample.question.clone(),
            status: SampleStatus::Failed,
            global_caption: None,
            object_examples: Vec::new(),
            mka: None,
            object_examples_used: 0,
            memory_examples_used: 0,
            prompt: None,
            completion: None,
            answer: None,
            score: None,
            memory: MemoryDelta::default(),
            errors: Vec::new(),
        }
    }

    fn error(&mut self, stage: Stage, message: impl ToString) {
        self.errors.push(StageError { stage, message: message.to_string() });
    }

    pub fn selected_indices(&self) -> Vec<usize> {
        self.mka.as_ref().map(|m| m.selected.iter().map(|s| s.index).collect()).unwrap_or_default()
    }
}

/// Wall-clock stage durations, kept apart from transcripts so those stay
/// reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub sample_id: String,
    pub oeg_ms: f64,
    pub mka_ms: f64,
    pub prompt_ms: f64,
    pub llm_ms: f64,
    pub memory_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SampleRun {
    pub transcript: SampleTranscript,
    pub timings: StageTimings,
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

struct Work {
    transcript: SampleTranscript,
    timings: StageTimings,
    oeg: Option<OegOutput>,
}

fn generate(backends: &dyn ModelBackends, cfg: &PipelineConfig, sample: &VqaSample) -> Work {
    let mut transcript = SampleTranscript::new(sample);
    let mut timings = StageTimings { sample_id: transcript.sample_id.clone(), ..Default::default() };
    let start = Instant::now();
    let sample_id = transcript.sample_id.clone();
    let result = if cfg.enable_oeg {
        run_oeg(backends, &sample.image, &cfg.oeg, Some(&sample_id))
    } else {
        global_caption_examples(backends, &sample.image, &cfg.oeg, Some(&sample_id))
    };
    let oeg = match result {
        Ok(out) => Some(out),
        Err(OegError::PartialFailure { output, errors }) => {
            for e in errors {
                transcript.error(Stage::Oeg, format!("region {}: {}", e.region, e.error));
            }
            Some(*output)
        }
        Err(e) => {
            transcript.error(Stage::Oeg, e);
            None
        }
    };
    if let Some(out) = &oeg {
        transcript.global_caption = Some(out.global_caption.text().to_owned());
        transcript.object_examples = out
            .object_examples
            .iter()
            .enumerate()
            .map(|(j, e)| ExampleRecord {
                id: format!("{sample_id}/o{}", j + 1),
                source: e.source,
                region: e.caption.region().map(|r| r.label.clone()),
                caption: e.caption.text().to_owned(),
                question: e.qa.question().to_owned(),
                answer: e.qa.answer().to_owned(),
            })
            .collect();
    }
    timings.oeg_ms = ms(start);
    Work { transcript, timings, oeg }
}

/// Retrieval, prompting and answer extraction against a read-only memory.
fn infer(backends: &dyn ModelBackends, cfg: &PipelineConfig, store: &MemoryStore, sample: &VqaSample, work: &mut Work) {
    let Some(oeg) = &work.oeg else { return };
    let tr = &mut work.transcript;

    let mut memory_examples: Vec<Example> = Vec::new();
    if cfg.enable_mka {
        let start = Instant::now();
        let outcome = run_mka(backends, store, &sample.image, &sample.question, cfg.mka.n, cfg.mka.raw_answer_compare);
        work.timings.mka_ms = ms(start);
        match outcome {
            Ok(o) => {
                let mut selected = Vec::with_capacity(o.selection.len());
                for (&index, &similarity) in o.selection.indices.iter().zip(&o.selection.similarities) {
                    let stored = store.get(index).expect("selected indices come from the store");
                    let ex = &stored.example;
                    selected.push(SelectedRecord {
                        index,
                        similarity,
                        origin_sample_id: ex.origin_sample_id.clone(),
                        caption: ex.caption.text().to_owned(),
                        question: ex.qa.question().to_owned(),
                        answer: ex.qa.answer().to_owned(),
                    });
                    memory_examples.push(ex.clone());
                }
                tr.mka = Some(MkaRecord {
                    qa_answer: o.answers.biased,
                    vqa_answer: o.answers.ordinary,
                    mode: o.mode,
                    selected,
                });
            }
            Err(e) => {
                tr.error(Stage::Mka, e);
                return;
            }
        }
    }

    let start = Instant::now();
    let built = build_prompt_truncated(
        &cfg.prompt,
        oeg.global_caption.text(),
        &oeg.object_examples,
        &memory_examples,
        &sample.question,
    );
    work.timings.prompt_ms = ms(start);
    let prompt = match built {
        Ok(p) => p,
        Err(e) => {
            tr.error(Stage::Prompt, e);
            return;
        }
    };
    tr.object_examples_used = prompt.object_examples.len();
    tr.memory_examples_used = prompt.memory_examples.len();
    let text = render_prompt(&prompt);
    tr.prompt = Some(text.clone());

    let start = Instant::now();
    let completion = backends.llm_complete(&text, &cfg.llm);
    work.timings.llm_ms = ms(start);
    let completion = match completion {
        Ok(c) => c,
        Err(e) => {
            tr.error(Stage::Llm, e);
            return;
        }
    };
    let answer = extract_answer(&completion, &cfg.llm.stop_sequences);
    tr.completion = Some(completion);
    match answer {
        Ok(a) => {
            tr.answer = Some(a);
            tr.status = SampleStatus::Answered;
        }
        Err(e) => tr.error(Stage::Extract, e),
    }
}

fn commit(backends: &dyn ModelBackends, store: &mut MemoryStore, examples: Vec<Example>, work: &mut Work) {
    let start = Instant::now();
    let tr = &mut work.transcript;
    let report = memory_insert(store, examples, backends);
    tr.memory.committed = true;
    tr.memory.inserted = report.inserted;
    tr.memory.duplicates = report.duplicates;
    tr.memory.evicted = report.evicted;
    tr.memory.insert_failures = report.failures.len();
    tr.memory.after = store.len();
    for (pos, e) in report.failures {
        tr.error(Stage::Memory, format!("example {}: {e}", pos + 1));
    }
    work.timings.memory_ms += ms(start);
}

fn score(cfg: &PipelineConfig, sample: &VqaSample, tr: &mut SampleTranscript) {
    let Some(human) = &sample.human_answers else { return };
    tr.score = Some(match (&tr.answer, tr.status) {
        (Some(a), SampleStatus::Answered) => soft_accuracy(a, human, cfg.eval.simple_accuracy).unwrap_or(0.0),
        _ => 0.0,
    });
}

fn finish(cfg: &PipelineConfig, sample: &VqaSample, mut work: Work) -> SampleRun {
    if work.oeg.is_none() {
        work.transcript.memory.after = work.transcript.memory.before;
    }
    score(cfg, sample, &mut work.transcript);
    SampleRun { transcript: work.transcript, timings: work.timings }
}

fn record_memory_start(store: &MemoryStore, work: &mut Work) {
    work.transcript.memory.before = store.len();
    work.transcript.memory.next_index_before = store.next_index();
    work.transcript.memory.after = store.len();
}

/// Runs one sample and grows `store` with its examples when it succeeds.
pub fn run_sample(
    backends: &dyn ModelBackends,
    cfg: &PipelineConfig,
    store: &mut MemoryStore,
    sample: &VqaSample,
) -> SampleRun {
    let mut work = generate(backends, cfg, sample);
    record_memory_start(store, &mut work);
    if work.oeg.is_none() {
        return finish(cfg, sample, work);
    }
    if cfg.enable_mka && cfg.mka.insert_before_inference {
        let examples = work.oeg.as_ref().map(|o| o.object_examples.clone()).unwrap_or_default();
        commit(backends, store, examples, &mut work);
        // retrieval may now return this sample's own examples
        work.transcript.memory.next_index_before = store.next_index();
        infer(backends, cfg, store, sample, &mut work);
    } else {
        infer(backends, cfg, store, sample, &mut work);
        if cfg.enable_mka && work.transcript.status == SampleStatus::Answered {
            let examples = work.oeg.as_ref().map(|o| o.object_examples.clone()).unwrap_or_default();
            commit(backends, store, examples, &mut work);
        }
    }
    finish(cfg, sample, work)
}

#[derive(Debug, Clone)]
pub struct DatasetRun {
    pub transcripts: Vec<SampleTranscript>,
    pub timings: Vec<StageTimings>,
    pub report: EvalReport,
    pub initial_memory: usize,
    pub final_memory: usize,
}

impl DatasetRun {
    /// Writes `transcripts.jsonl`, `timings.jsonl`, `metrics.json` and
    /// `report.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("transcripts.jsonl"), to_jsonl(&self.transcripts))?;
        fs::write(dir.join("timings.jsonl"), to_jsonl(&self.timings))?;
        let mut metrics = serde_json::to_string_pretty(&self.report).expect("reports serialize");
        metrics.push('\n');
        fs::write(dir.join("metrics.json"), metrics)?;
        fs::write(dir.join("report.txt"), crate::eval::render_table(std::slice::from_ref(&self.report)))?;
        Ok(())
    }
}

fn ordered(samples: &[VqaSample], order: SampleOrder) -> Vec<&VqaSample> {
    match order {
        SampleOrder::AsGiven => samples.iter().collect(),
        SampleOrder::Reversed => samples.iter().rev().collect(),
    }
}

pub fn config_echo(cfg: &PipelineConfig) -> Value {
    serde_json::to_value(cfg).expect("configs serialize")
}

/// Runs every sample in the configured order against `store`.
pub fn run_dataset(
    backends: &dyn ModelBackends,
    cfg: &PipelineConfig,
    store: &mut MemoryStore,
    samples: &[VqaSample],
) -> Result<DatasetRun, PipelineError> {
    cfg.validate().map_err(PipelineError::Config)?;
    if samples.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let initial_memory = store.len();
    let samples = ordered(samples, cfg.order);
    let mut runs = Vec::with_capacity(samples.len());
    match cfg.snapshot_batch {
        None => {
            for sample in samples {
                let run = run_sample(backends, cfg, store, sample);
                log::info!("sample {} {:?}", run.transcript.sample_id, run.transcript.status);
                runs.push(run);
            }
        }
        Some(batch) => {
            for chunk in samples.chunks(batch) {
                let frozen: &MemoryStore = store;
                let works: Vec<Work> = chunk
                    .par_iter()
                    .map(|sample| {
                        let mut work = generate(backends, cfg, sample);
                        record_memory_start(frozen, &mut work);
                        infer(backends, cfg, frozen, sample, &mut work);
                        work
                    })
                    .collect();
                for (sample, mut work) in chunk.iter().zip(works) {
                    if work.oeg.is_some() {
                        record_memory_start(store, &mut work);
                        if cfg.enable_mka && work.transcript.status == SampleStatus::Answered {
                            let examples = work.oeg.as_ref().map(|o| o.object_examples.clone()).unwrap_or_default();
                            commit(backends, store, examples, &mut work);
                        }
                    }
                    runs.push(finish(cfg, sample, work));
                }
            }
        }
    }
    let (transcripts, timings): (Vec<_>, Vec<_>) = runs.into_iter().map(|r| (r.transcript, r.timings)).unzip();
    let report = EvalReport::from_transcripts(cfg.label(), &transcripts, config_echo(cfg));
    Ok(DatasetRun { transcripts, timings, report, initial_memory, final_memory: store.len() })
}

/// Fresh memory seeded with `cfg.seed_k` examples from `seed_pool`, then
/// [`run_dataset`]. Seeding is skipped when retrieval is disabled.
pub fn run_cell(
    backends: &dyn ModelBackends,
    cfg: &PipelineConfig,
    samples: &[VqaSample],
    seed_pool: &[Example],
) -> Result<DatasetRun, PipelineError> {
    cfg.validate().map_err(PipelineError::Config)?;
    let mut store = MemoryStore::new(cfg.mka.capacity);
    if cfg.enable_mka && cfg.seed_k > 0 {
        let report = memory_seed(&mut store, seed_pool, cfg.seed_k, backends).map_err(|e| PipelineError::Seed(e.to_string()))?;
        if let Some((pos, e)) = report.failures.first() {
            return Err(PipelineError::Seed(format!("seed example {}: {e}", pos + 1)));
        }
    } else if cfg.seed_k > 0 {
        log::warn!("seed_k={} ignored because memory retrieval is disabled", cfg.seed_k);
    }
    run_dataset(backends, cfg, &mut store, samples)
}

/// Checks that memory sizes chain from `initial` through every transcript
/// and that every sample's examples are accounted for.
pub fn memory_audit(initial: usize, transcripts: &[SampleTranscript]) -> Result<usize, String> {
    let mut k = initial;
    for t in transcripts {
        let m = &t.memory;
        if m.before != k {
            return Err(format!("sample {}: memory before {} but running total {k}", t.sample_id, m.before));
        }
        if m.committed {
            if m.inserted + m.duplicates + m.insert_failures != t.object_examples.len() {
                return Err(format!("sample {}: insert counts do not cover {} examples", t.sample_id, t.object_examples.len()));
            }
        } else if m.inserted + m.duplicates + m.evicted + m.insert_failures != 0 {
            return Err(format!("sample {}: uncommitted sample changed memory", t.sample_id));
        }
        if m.after != m.before + m.inserted - m.evicted {
            return Err(format!("sample {}: after {} != {} + {} - {}", t.sample_id, m.after, m.before, m.inserted, m.evicted));
        }
        if let Some(bad) = t.selected_indices().into_iter().find(|&i| i >= m.next_index_before) {
            return Err(format!("sample {}: retrieved index {bad} was not yet inserted", t.sample_id));
        }
        k = m.after;
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendClient, Endpoint, MockConfig, MockTransport, MockWorld};
    use std::sync::Arc;

    fn setup(cfg: MockConfig) -> (Arc<MockWorld>, BackendClient<MockTransport>) {
        let w = Arc::new(MockWorld::new(cfg));
        (w.clone(), BackendClient::new(MockTransport(w), 0))
    }

    #[test]
    fn first_then_second_sample_forms() {
        let (w, b) = setup(MockConfig::default());
        let samples = w.synthetic_dataset(2);
        let cfg = PipelineConfig::default();
        let mut store = MemoryStore::default();
        let first = run_sample(&b, &cfg, &mut store, &samples[0]).transcript;
        assert_eq!(first.status, SampleStatus::Answered, "{:?}", first.errors);
        assert_eq!(first.memory_examples_used, 0);
        assert_eq!(store.len(), first.object_examples.len());
        let second = run_sample(&b, &cfg, &mut store, &samples[1]).transcript;
        assert_eq!(second.memory_examples_used, cfg.mka.n.min(first.object_examples.len()));
        assert_eq!(second.mka.as_ref().unwrap().selected.len(), second.memory_examples_used);
        let prompt = second.prompt.unwrap();
        assert!(prompt.ends_with(&format!("Question: {}\nAnswer:", samples[1].question)));
    }

    #[test]
    fn no_retrieval_calls_without_mka() {
        let (w, b) = setup(MockConfig::default());
        let samples = w.synthetic_dataset(3);
        let cfg = PipelineConfig { enable_mka: false, ..Default::default() };
        let mut store = MemoryStore::default();
        let run = run_dataset(&b, &cfg, &mut store, &samples).unwrap();
        assert!(store.is_empty());
        for e in [Endpoint::Qa, Endpoint::Vqa, Endpoint::Embed] {
            assert_eq!(w.call_count(e), 0, "{e:?}");
        }
        assert!(run.transcripts.iter().all(|t| t.mka.is_none() && !t.memory.committed));
    }

    #[test]
    fn llm_failure_keeps_transcripts() {
        let (w, b) = setup(MockConfig::default().failing(Endpoint::Llm));
        let samples = w.synthetic_dataset(4);
        let mut store = MemoryStore::default();
        let run = run_dataset(&b, &PipelineConfig::default(), &mut store, &samples).unwrap();
        assert_eq!(run.report.answered, 0);
        assert_eq!(run.report.failed, 4);
        assert_eq!(run.report.mean, Some(0.0));
        assert!(store.is_empty());
        for t in &run.transcripts {
            assert!(t.prompt.is_some());
            assert_eq!(t.errors[0].stage, Stage::Llm);
        }
        memory_audit(0, &run.transcripts).unwrap();
    }

    #[test]
    fn audit_and_causality() {
        let (w, b) = setup(MockConfig::default());
        let samples = w.synthetic_dataset(12);
        let pool = w.synthetic_seed_examples(5);
        let cfg = PipelineConfig { seed_k: 5, mka: MkaConfig { capacity: Some(20), ..Default::default() }, ..Default::default() };
        let run = run_cell(&b, &cfg, &samples, &pool).unwrap();
        assert_eq!(run.initial_memory, 5);
        assert_eq!(memory_audit(5, &run.transcripts).unwrap(), run.final_memory);
        assert!(run.final_memory <= 20);
        assert!(run.transcripts.iter().any(|t| t.memory.evicted > 0));
    }

    #[test]
    fn snapshot_mode_runs_and_audits() {
        let (w, b) = setup(MockConfig::default());
        let samples = w.synthetic_dataset(9);
        let cfg = PipelineConfig { snapshot_batch: Some(4), ..Default::default() };
        let mut store = MemoryStore::default();
        let run = run_dataset(&b, &cfg, &mut store, &samples).unwrap();
        assert_eq!(run.transcripts.len(), 9);
        memory_audit(0, &run.transcripts).unwrap();
        // the first batch sees an empty memory
        assert!(run.transcripts[..4].iter().all(|t| t.memory_examples_used == 0));
        let again = run_dataset(&b, &cfg, &mut MemoryStore::default(), &samples).unwrap();
        assert_eq!(to_jsonl(&run.transcripts), to_jsonl(&again.transcripts));
    }

    #[test]
    fn insert_before_can_retrieve_own_examples() {
        let (w, b) = setup(MockConfig::default());
        let samples = w.synthetic_dataset(1);
        let cfg = PipelineConfig { mka: MkaConfig { insert_before_inference: true, ..Default::default() }, ..Default::default() };
        let mut store = MemoryStore::default();
        let t = run_sample(&b, &cfg, &mut store, &samples[0]).transcript;
        if !t.object_examples.is_empty() {
            let sel = &t.mka.as_ref().unwrap().selected;
            assert!(!sel.is_empty());
            assert!(sel.iter().all(|s| s.origin_sample_id.as_deref() == Some(t.sample_id.as_str())));
        }
    }

    #[test]
    fn config_checks() {
        let bad = [
            PipelineConfig { snapshot_batch: Some(0), ..Default::default() },
            PipelineConfig {
                snapshot_batch: Some(2),
                mka: MkaConfig { insert_before_inference: true, ..Default::default() },
                ..Default::default()
            },
            PipelineConfig { mka: MkaConfig { n: 0, ..Default::default() }, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
        let (_, b) = setup(MockConfig::default());
        assert!(matches!(run_dataset(&b, &PipelineConfig::default(), &mut MemoryStore::default(), &[]), Err(PipelineError::EmptyDataset)));
        assert!(matches!(
            run_cell(&b, &PipelineConfig { seed_k: 3, ..Default::default() }, &[], &[]),
            Err(PipelineError::Seed(_))
        ));
    }

    #[test]
    fn labels() {
        assert_eq!(PipelineConfig::default().label(), "oeg=on mka=on k=0 layout=CQA-CQA-CQA order=as_given");
    }
}
