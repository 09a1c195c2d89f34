use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::MkaError;
use crate::backends::ModelBackends;
use crate::types::{Example, FeatureVector};

/// One stored example and its permanent index (1-based, never reused).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredExample {
    pub index: usize,
    pub example: Example,
}

impl StoredExample {
    pub fn feature(&self) -> &FeatureVector {
        self.example.feature.as_ref().expect("stored examples always carry a feature")
    }
}

/// Append-only example memory.
///
/// Indices are assigned in insertion order starting at 1 and stay attached
/// to their example; with a capacity set the oldest entries are evicted
/// first, so indices stay increasing but may no longer start at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryStore {
    pub(super) entries: VecDeque<StoredExample>,
    pub(super) feature_dim: Option<usize>,
    pub(super) capacity: Option<usize>,
    pub(super) next_index: usize,
    pub(super) keys: HashSet<(String, String, String)>,
}

impl Default for MemoryStore {
    fn default() -> Self {
        Self::new(None)
    }
}

/// Outcome of one insertion batch.
#[derive(Debug, Default)]
pub struct InsertReport {
    pub inserted: usize,
    pub duplicates: usize,
    pub evicted: usize,
    /// Position within the batch and the reason it was not inserted.
    pub failures: Vec<(usize, MkaError)>,
}

impl MemoryStore {
    pub fn new(capacity: Option<usize>) -> Self {
        Self { entries: VecDeque::new(), feature_dim: None, capacity, next_index: 1, keys: HashSet::new() }
    }

    pub fn with_feature_dim(mut self, dim: usize) -> Self {
        self.feature_dim = Some(dim);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.feature_dim
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    /// Index the next inserted example will receive.
    pub fn next_index(&self) -> usize {
        self.next_index
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &StoredExample> {
        self.entries.iter()
    }

    pub fn get(&self, index: usize) -> Option<&StoredExample> {
        self.entries.binary_search_by_key(&index, |e| e.index).ok().map(|pos| &self.entries[pos])
    }

    pub fn contains(&self, example: &Example) -> bool {
        self.keys.contains(&example.triple_key())
    }

    /// Appends `examples` in order. Duplicate triples are skipped; examples
    /// without a feature are passed to `embed` first. Failures are reported
    /// per item and do not stop the batch.
    pub fn insert_with<F>(&mut self, examples: impl IntoIterator<Item = Example>, mut embed: F) -> InsertReport
    where
        F: FnMut(&Example) -> Result<FeatureVector, MkaError>,
    {
        let mut report = InsertReport::default();
        for (pos, mut example) in examples.into_iter().enumerate() {
            let key = example.triple_key();
            if self.keys.contains(&key) {
                report.duplicates += 1;
                continue;
            }
            if example.feature.is_none() {
                match embed(&example) {
                    Ok(f) => example.feature = Some(f),
                    Err(e) => {
                        report.failures.push((pos, e));
                        continue;
                    }
                }
            }
            let dim = example.feature.as_ref().map(FeatureVector::dim).unwrap_or_default();
            match self.feature_dim {
                Some(expected) if expected != dim => {
                    report.failures.push((pos, MkaError::DimensionMismatch { expected, got: dim }));
                    continue;
                }
                Some(_) => {}
                None => self.feature_dim = Some(dim),
            }
            self.keys.insert(key);
            self.entries.push_back(StoredExample { index: self.next_index, example });
            self.next_index += 1;
            report.inserted += 1;
            if let Some(cap) = self.capacity {
                while self.entries.len() > cap {
                    let old = self.entries.pop_front().expect("len > cap >= 0");
                    self.keys.remove(&old.example.triple_key());
                    report.evicted += 1;
                }
            }
        }
        report
    }

    /// Drops entries whose feature has zero norm (they can never be
    /// retrieved), then all but the newest `keep`. Indices are unchanged.
    /// Returns the number removed.
    pub fn compact(&mut self, keep: Option<usize>) -> usize {
        let before = self.entries.len();
        self.entries.retain(|e| e.feature().norm() > 0.0);
        if let Some(keep) = keep {
            while self.entries.len() > keep {
                self.entries.pop_front();
            }
        }
        self.keys = self.entries.iter().map(|e| e.example.triple_key()).collect();
        before - self.entries.len()
    }

    /// Inserts examples that already carry features; others fail with
    /// [`MkaError::MissingFeature`].
    pub fn insert_embedded(&mut self, examples: impl IntoIterator<Item = Example>) -> InsertReport {
        self.insert_with(examples, |_| Err(MkaError::MissingFeature))
    }
}

/// Embeds with the VQA encoder from the example's origin image, region and
/// question.
pub fn embed_with<'a>(backends: &'a dyn ModelBackends) -> impl FnMut(&Example) -> Result<FeatureVector, MkaError> + 'a {
    move |ex: &Example| {
        let image = ex.origin_image.as_ref().ok_or(MkaError::MissingFeature)?;
        Ok(backends.embed_example(image, ex.caption.region(), ex.qa.question())?)
    }
}

pub fn memory_insert(store: &mut MemoryStore, examples: Vec<Example>, backends: &dyn ModelBackends) -> InsertReport {
    store.insert_with(examples, embed_with(backends))
}

/// Inserts the first `k` of `examples` before any sample runs.
pub fn memory_seed(
    store: &mut MemoryStore,
    examples: &[Example],
    k: usize,
    backends: &dyn ModelBackends,
) -> Result<InsertReport, MkaError> {
    if examples.len() < k {
        return Err(MkaError::Precondition(format!("asked to seed {k} examples but only {} provided", examples.len())));
    }
    Ok(memory_insert(store, examples[..k].to_vec(), backends))
}
