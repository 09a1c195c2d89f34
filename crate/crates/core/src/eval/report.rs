use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::pipeline::{SampleStatus, SampleTranscript};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub question_id: u64,
    pub answered: bool,
    pub predicted: Option<String>,
    /// Absent for samples without human answers. Failed samples score 0.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    /// Mean over scored samples; absent when nothing could be scored.
    pub mean: Option<f64>,
    pub scored: usize,
    pub answered: usize,
    pub failed: usize,
    pub unscored: usize,
    pub samples: Vec<SampleScore>,
    pub config: Value,
}

impl EvalReport {
    pub fn new(label: impl Into<String>, samples: Vec<SampleScore>, config: Value) -> Self {
        let scores: Vec<f64> = samples.iter().filter_map(|s| s.score).collect();
        let mean = if scores.is_empty() { None } else { Some(scores.iter().sum::<f64>() / scores.len() as f64) };
        let answered = samples.iter().filter(|s| s.answered).count();
        Self {
            label: label.into(),
            mean,
            scored: scores.len(),
            answered,
            failed: samples.len() - answered,
            unscored: samples.len() - scores.len(),
            samples,
            config,
        }
    }

    pub fn from_transcripts(label: impl Into<String>, transcripts: &[SampleTranscript], config: Value) -> Self {
        let samples = transcripts
            .iter()
            .map(|t| SampleScore {
                question_id: t.question_id,
                answered: t.status == SampleStatus::Answered,
                predicted: t.answer.clone(),
                score: t.score,
            })
            .collect();
        Self::new(label, samples, config)
    }

    /// A report for a cell that could not run at all.
    pub fn failed_cell(label: impl Into<String>, config: Value) -> Self {
        Self::new(label, Vec::new(), config)
    }
}

fn percent(mean: Option<f64>) -> String {
    mean.map_or_else(|| "-".to_owned(), |m| format!("{:.2}", m * 100.0))
}

/// Plain-text table, one row per report.
pub fn render_table(reports: &[EvalReport]) -> String {
    let width = reports.iter().map(|r| r.label.len()).max().unwrap_or(0).max("cell".len());
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>8}  {:>6}  {:>8}  {:>6}", "cell", "accuracy", "scored", "answered", "failed");
    let _ = writeln!(out, "{}", "-".repeat(width + 36));
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>6}  {:>8}  {:>6}",
            r.label,
            percent(r.mean),
            r.scored,
            r.answered,
            r.failed
        );
    }
    out
}

/// One JSON document per line.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("report types serialize"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(id: u64, answered: bool, score: Option<f64>) -> SampleScore {
        SampleScore { question_id: id, answered, predicted: answered.then(|| "x".into()), score }
    }

    #[test]
    fn counts() {
        let r = EvalReport::new("c", vec![s(1, true, Some(1.0)), s(2, false, Some(0.0)), s(3, true, None)], Value::Null);
        assert_eq!((r.scored, r.answered, r.failed, r.unscored), (2, 2, 1, 1));
        assert_eq!(r.mean, Some(0.5));
        assert_eq!(EvalReport::new("e", vec![s(1, true, None)], Value::Null).mean, None);
    }

    #[test]
    fn table_and_jsonl() {
        let r = EvalReport::new("oeg=on mka=on", vec![s(1, true, Some(0.9))], Value::Null);
        let t = render_table(std::slice::from_ref(&r));
        assert!(t.lines().nth(2).unwrap().contains("90.00"));
        let back: Vec<EvalReport> = from_jsonl(&to_jsonl(std::slice::from_ref(&r))).unwrap();
        assert_eq!(back, vec![r]);
    }

    proptest! {
        #[test]
        fn mean_matches_recomputation(scores in proptest::collection::vec(proptest::option::of(0.0f64..=1.0), 0..40)) {
            let samples: Vec<_> = scores.iter().enumerate().map(|(i, sc)| s(i as u64, true, *sc)).collect();
            let r = EvalReport::new("p", samples, Value::Null);
            let present: Vec<f64> = scores.iter().flatten().copied().collect();
            match r.mean {
                None => prop_assert!(present.is_empty()),
                Some(m) => {
                    let mut total = 0.0;
                    for x in &present {
                        total += x;
                    }
                    prop_assert!((m - total / present.len() as f64).abs() <= 1e-12);
                }
            }
        }
    }
}
