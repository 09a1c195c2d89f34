use crate::text::normalize_answer;

use super::EvalError;

pub const ANNOTATORS: usize = 10;

/// Number of human answers equal to `predicted` after normalization.
pub fn matching_count(predicted: &str, human_answers: &[String]) -> usize {
    let p = normalize_answer(predicted);
    human_answers.iter().filter(|h| normalize_answer(h) == p).count()
}

/// Consensus score for `k` of ten annotators agreeing: the mean over the
/// ten leave-one-out subsets of `min(matches / 3, 1)`.
pub fn score_for_count(k: usize) -> f64 {
    let k = k.min(ANNOTATORS) as f64;
    let dropped_match = ((k - 1.0) / 3.0).clamp(0.0, 1.0);
    let dropped_other = (k / 3.0).min(1.0);
    (k * dropped_match + (ANNOTATORS as f64 - k) * dropped_other) / ANNOTATORS as f64
}

/// `min(k / 3, 1)` without subset averaging.
pub fn simple_score_for_count(k: usize) -> f64 {
    (k as f64 / 3.0).min(1.0)
}

pub fn soft_accuracy(predicted: &str, human_answers: &[String], simple: bool) -> Result<f64, EvalError> {
    if human_answers.len() != ANNOTATORS {
        return Err(EvalError::AnnotationCount(human_answers.len()));
    }
    let k = matching_count(predicted, human_answers);
    Ok(if simple { simple_score_for_count(k) } else { score_for_count(k) })
}
