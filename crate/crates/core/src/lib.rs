//! Retrieval-augmented prompting engine for knowledge-based visual question
//! answering.
//!
//! A sample flows through four stages:
//!
//! 1. [`oeg`] captions the image globally and per region, extracts candidate
//!    answers from each regional caption and generates a question for each,
//!    giving object-concentrated (caption, question, answer) examples;
//! 2. [`mka`] compares a question-only answer with an image-grounded one to
//!    pick a selection mode, then retrieves the most (or least) similar
//!    examples from a growing memory by cosine similarity;
//! 3. [`prompt`] lays the instruction, global caption, examples and question
//!    out as text;
//! 4. an LLM completes it, and [`eval`] scores the answer.
//!
//! [`pipeline`] runs samples in sequence, growing memory as it goes. All
//! models sit behind [`backends::ModelBackends`].

pub mod backends;
pub mod config;
pub mod eval;
pub mod mka;
pub mod oeg;
pub mod pipeline;
pub mod prompt;
pub mod similarity;
pub mod text;
pub mod types;

pub use similarity::{cosine_similarity, SimilarityError};
pub use text::normalize_answer;
pub use types::*;
