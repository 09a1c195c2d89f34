//! Memory-based example selection.
//!
//! A question-only QA model and the VQA model both answer the question. When
//! their normalized answers agree, the image added nothing the language prior
//! did not already know, so the least similar stored examples are chosen to
//! push against that bias. When they disagree the most similar ones are
//! chosen.

pub mod persist;
pub mod store;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, ModelBackends};
use crate::similarity::{cosine_similarity, SimilarityError};
use crate::text::normalize_answer;
use crate::types::{AnswerPair, FeatureVector, ImageRef, SelectionMode};

pub use persist::{load_examples, memory_load, memory_persist, write_examples, PersistError};
pub use store::{embed_with, memory_insert, memory_seed, InsertReport, MemoryStore, StoredExample};

#[derive(Debug, Error)]
pub enum MkaError {
    #[error("{which} answer is empty after normalization")]
    InvalidAnswer { which: &'static str },
    #[error("memory is empty")]
    EmptyStore,
    #[error("query feature has zero norm")]
    ZeroNorm,
    #[error("feature dimension {got} does not match memory dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("example has no feature and no origin image to embed from")]
    MissingFeature,
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

pub const DEFAULT_SELECTION_SIZE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MkaConfig {
    /// Examples retrieved per sample.
    pub n: usize,
    /// Oldest examples are evicted beyond this size.
    pub capacity: Option<usize>,
    /// Compare answers exactly instead of after normalization.
    pub raw_answer_compare: bool,
    /// Insert a sample's own examples before retrieving for it.
    pub insert_before_inference: bool,
}

impl Default for MkaConfig {
    fn default() -> Self {
        Self { n: DEFAULT_SELECTION_SIZE, capacity: None, raw_answer_compare: false, insert_before_inference: false }
    }
}

impl MkaConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n == 0 {
            return Err("mka.n must be at least 1".into());
        }
        if self.capacity == Some(0) {
            return Err("mka.capacity must be at least 1".into());
        }
        Ok(())
    }
}

/// Negative when both answers agree, positive otherwise. With `raw` the
/// strings are compared exactly instead of after normalization.
pub fn estimate_mode(answers: &AnswerPair, raw: bool) -> Result<SelectionMode, MkaError> {
    let (biased, ordinary) = if raw {
        (answers.biased.clone(), answers.ordinary.clone())
    } else {
        (normalize_answer(&answers.biased), normalize_answer(&answers.ordinary))
    };
    if biased.trim().is_empty() {
        return Err(MkaError::InvalidAnswer { which: "QA" });
    }
    if ordinary.trim().is_empty() {
        return Err(MkaError::InvalidAnswer { which: "VQA" });
    }
    Ok(if biased == ordinary { SelectionMode::Negative } else { SelectionMode::Positive })
}

/// Chosen store indices, best first for the mode in use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub mode: SelectionMode,
    pub indices: Vec<usize>,
    pub similarities: Vec<f64>,
}

impl SelectionResult {
    pub fn empty(mode: SelectionMode) -> Self {
        Self { mode, indices: Vec::new(), similarities: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Positive mode takes the `n` most similar stored examples in descending
/// order, negative the `n` least similar in ascending order. Equal scores
/// go to the smaller index. Stored features with zero norm are skipped.
pub fn select_examples(
    store: &MemoryStore,
    query: &FeatureVector,
    n: usize,
    mode: SelectionMode,
) -> Result<SelectionResult, MkaError> {
    if n == 0 {
        return Err(MkaError::Precondition("selection size must be at least 1".into()));
    }
    if store.is_empty() {
        return Err(MkaError::EmptyStore);
    }
    if let Some(expected) = store.feature_dim() {
        if expected != query.dim() {
            return Err(MkaError::DimensionMismatch { expected, got: query.dim() });
        }
    }
    if query.norm() == 0.0 {
        return Err(MkaError::ZeroNorm);
    }

    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(store.len());
    for entry in store.entries() {
        match cosine_similarity(query, entry.feature()) {
            // adding zero folds -0.0 into 0.0 so equal scores tie on index
            Ok(s) => scored.push((s + 0.0, entry.index)),
            Err(SimilarityError::ZeroNorm) => log::warn!("skipping stored example {} with zero-norm feature", entry.index),
            Err(SimilarityError::DimensionMismatch { left, right }) => {
                return Err(MkaError::DimensionMismatch { expected: right, got: left })
            }
        }
    }

    let cmp = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
        let by_score = match mode {
            SelectionMode::Positive => b.0.total_cmp(&a.0),
            SelectionMode::Negative => a.0.total_cmp(&b.0),
        };
        by_score.then(a.1.cmp(&b.1))
    };
    if n < scored.len() {
        scored.select_nth_unstable_by(n - 1, cmp);
        scored.truncate(n);
    }
    scored.sort_unstable_by(cmp);

    Ok(SelectionResult {
        mode,
        similarities: scored.iter().map(|s| s.0).collect(),
        indices: scored.into_iter().map(|s| s.1).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MkaOutcome {
    pub answers: AnswerPair,
    pub mode: SelectionMode,
    pub feature: FeatureVector,
    pub selection: SelectionResult,
}

/// Queries both models, picks the mode and retrieves from `store`. An empty
/// store yields an empty selection.
pub fn run_mka(
    backends: &dyn ModelBackends,
    store: &MemoryStore,
    image: &ImageRef,
    question: &str,
    n: usize,
    raw_compare: bool,
) -> Result<MkaOutcome, MkaError> {
    let biased = backends.qa_predict(question)?;
    let prediction = backends.vqa_predict(image, question)?;
    let answers = AnswerPair::new(biased, prediction.answer);
    let mode = estimate_mode(&answers, raw_compare)?;
    let selection = if store.is_empty() {
        SelectionResult::empty(mode)
    } else {
        select_examples(store, &prediction.feature, n, mode)?
    };
    Ok(MkaOutcome { answers, mode, feature: prediction.feature, selection })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Caption, Example, ExampleSource, QAPair};
    use proptest::prelude::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    fn store_of(features: &[Vec<f64>]) -> MemoryStore {
        let mut s = MemoryStore::default();
        let r = s.insert_embedded(features.iter().enumerate().map(|(i, f)| {
            Example::new(Caption::global(format!("c{i}")).unwrap(), QAPair::new("q", "a").unwrap(), ExampleSource::MemorySeed)
                .with_feature(fv(f))
        }));
        assert_eq!(r.inserted, features.len());
        s
    }

    /// Repeatedly takes the best remaining candidate.
    fn oracle(features: &[Vec<f64>], q: &[f64], n: usize, mode: SelectionMode) -> Vec<usize> {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut left: Vec<(usize, f64)> = features
            .iter()
            .enumerate()
            .filter(|(_, f)| norm(f) > 0.0)
            .map(|(i, f)| (i + 1, f.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() / (norm(q) * norm(f))))
            .collect();
        let mut out = Vec::new();
        while out.len() < n && !left.is_empty() {
            let mut best = 0;
            for j in 1..left.len() {
                let better = match mode {
                    SelectionMode::Positive => left[j].1 > left[best].1,
                    SelectionMode::Negative => left[j].1 < left[best].1,
                };
                if better {
                    best = j;
                }
            }
            out.push(left.remove(best).0);
        }
        out
    }

    #[test]
    fn mode_from_answers() {
        let m = |a: &str, b: &str| estimate_mode(&AnswerPair::new(a, b), false);
        assert_eq!(m("yellow", "yellow").unwrap(), SelectionMode::Negative);
        assert_eq!(m("Yellow.", " yellow ").unwrap(), SelectionMode::Negative);
        assert_eq!(m("the dog", "dog").unwrap(), SelectionMode::Negative);
        assert_eq!(m("two", "2").unwrap(), SelectionMode::Negative);
        assert_eq!(m("yellow", "green").unwrap(), SelectionMode::Positive);
        assert!(matches!(m("", "green"), Err(MkaError::InvalidAnswer { which: "QA" })));
        assert!(matches!(m("green", "?!"), Err(MkaError::InvalidAnswer { which: "VQA" })));
        assert_eq!(estimate_mode(&AnswerPair::new("Yellow", "yellow"), true).unwrap(), SelectionMode::Positive);
    }

    #[test]
    fn worked_example() {
        let feats = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.7, 0.7]];
        let s = store_of(&feats);
        let q = fv(&[1.0, 0.1]);
        let pos = select_examples(&s, &q, 2, SelectionMode::Positive).unwrap();
        assert_eq!(pos.indices, vec![1, 4]);
        let neg = select_examples(&s, &q, 2, SelectionMode::Negative).unwrap();
        assert_eq!(neg.indices, vec![3, 2]);
        assert!(neg.similarities[0] <= neg.similarities[1]);
    }

    #[test]
    fn oversized_n_returns_everything() {
        let s = store_of(&[vec![1.0], vec![-1.0]]);
        let r = select_examples(&s, &fv(&[2.0]), 10, SelectionMode::Positive).unwrap();
        assert_eq!(r.indices, vec![1, 2]);
    }

    #[test]
    fn ties_prefer_smaller_index() {
        let s = store_of(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0], vec![0.0, 1.0]]);
        let q = fv(&[1.0, 0.0]);
        assert_eq!(select_examples(&s, &q, 2, SelectionMode::Positive).unwrap().indices, vec![1, 2]);
        assert_eq!(select_examples(&s, &q, 2, SelectionMode::Negative).unwrap().indices, vec![4, 1]);
    }

    #[test]
    fn errors() {
        let s = store_of(&[vec![1.0, 0.0]]);
        assert!(matches!(select_examples(&MemoryStore::default(), &fv(&[1.0]), 1, SelectionMode::Positive), Err(MkaError::EmptyStore)));
        assert!(matches!(select_examples(&s, &fv(&[0.0, 0.0]), 1, SelectionMode::Positive), Err(MkaError::ZeroNorm)));
        assert!(matches!(
            select_examples(&s, &fv(&[1.0]), 1, SelectionMode::Positive),
            Err(MkaError::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(matches!(select_examples(&s, &fv(&[1.0, 0.0]), 0, SelectionMode::Positive), Err(MkaError::Precondition(_))));
    }

    #[test]
    fn zero_norm_entries_are_skipped() {
        let s = store_of(&[vec![0.0, 0.0], vec![1.0, 0.0]]);
        let r = select_examples(&s, &fv(&[1.0, 1.0]), 5, SelectionMode::Negative).unwrap();
        assert_eq!(r.indices, vec![2]);
    }

    fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, usize)> {
        (1usize..8, 1usize..30).prop_flat_map(|(d, k)| {
            // small integers make exact ties common
            let v = proptest::collection::vec(-3i32..4, d).prop_map(|v| v.into_iter().map(f64::from).collect::<Vec<_>>());
            let q = proptest::collection::vec(-3i32..4, d)
                .prop_map(|v| v.into_iter().map(f64::from).collect::<Vec<_>>())
                .prop_filter("nonzero query", |q| q.iter().any(|x| *x != 0.0));
            (proptest::collection::vec(v, k), q, 1usize..40)
        })
    }

    proptest! {
        #[test]
        fn matches_oracle((feats, q, n) in instance()) {
            let s = store_of(&feats);
            for mode in [SelectionMode::Positive, SelectionMode::Negative] {
                let got = select_examples(&s, &fv(&q), n, mode);
                let want = oracle(&feats, &q, n, mode);
                match got {
                    Ok(r) => prop_assert_eq!(r.indices, want),
                    Err(e) => prop_assert!(false, "unexpected error {e}"),
                }
            }
        }

        #[test]
        fn full_selections_are_reverses((feats, q, _n) in instance()) {
            let s = store_of(&feats);
            let k = feats.len();
            let pos = select_examples(&s, &fv(&q), k, SelectionMode::Positive).unwrap();
            let neg = select_examples(&s, &fv(&q), k, SelectionMode::Negative).unwrap();
            let mut a = pos.indices.clone();
            let mut b = neg.indices.clone();
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(a, b);
            let mut rev = neg.similarities.clone();
            rev.reverse();
            prop_assert_eq!(pos.similarities, rev);
        }

        #[test]
        fn query_scale_does_not_matter((feats, q, n) in instance(), scale in prop_oneof![Just(0.5), Just(2.0), Just(1024.0)]) {
            let s = store_of(&feats);
            let qs: Vec<f64> = q.iter().map(|x| x * scale).collect();
            for mode in [SelectionMode::Positive, SelectionMode::Negative] {
                prop_assert_eq!(
                    select_examples(&s, &fv(&q), n, mode).unwrap().indices,
                    select_examples(&s, &fv(&qs), n, mode).unwrap().indices
                );
            }
        }
    }

    #[test]
    fn run_mka_on_mock() {
        use crate::backends::{BackendClient, MockTransport, MockWorld};
        let world = std::sync::Arc::new(MockWorld::new(Default::default()));
        let b = BackendClient::new(MockTransport(world.clone()), 0);
        let img = ImageRef::new("img_banana", "mock://img_banana").unwrap();
        let out = run_mka(&b, &MemoryStore::default(), &img, "What color are the bananas?", 4, false).unwrap();
        assert_eq!(out.mode, SelectionMode::Negative);
        assert!(out.selection.is_empty());
        let img = ImageRef::new("img_green_banana", "mock://img_green_banana").unwrap();
        let out = run_mka(&b, &MemoryStore::default(), &img, "What color are the bananas?", 4, false).unwrap();
        assert_eq!(out.mode, SelectionMode::Positive);
        assert_eq!((out.answers.biased.as_str(), out.answers.ordinary.as_str()), ("yellow", "green"));
    }
}
