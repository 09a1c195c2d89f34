//! Rule-based candidate answer extraction.
//!
//! Used by the mock extractor and by the in-process fallback. Rules, in
//! output order:
//!
//! 1. phrases: maximal runs of non-stop-word tokens, paired into bigrams
//!    from the right end of each run; a leftover single token becomes a
//!    unigram unless it is a number,
//! 2. numbers: digit tokens and the words zero..ten, as numerals,
//! 3. the keywords `yes` / `no` when present.
//!
//! Output is deduplicated preserving first occurrence.

use crate::text::{digit_word, word_tokens};

pub const STOP_WORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "but", "of", "on", "in", "at", "by", "for", "to", "from", "into", "onto",
    "with", "without", "over", "under", "near", "next", "behind", "beside", "above", "below", "up", "down",
    "out", "off", "is", "are", "was", "were", "be", "been", "being", "it", "its", "this", "that", "these",
    "those", "there", "here", "his", "her", "their", "them", "they", "he", "she", "we", "you", "i", "my",
    "your", "our", "some", "very", "has", "have", "had", "do", "does", "did", "while", "as", "what", "which",
    "who", "how", "many", "yes", "no", "not",
];

pub fn is_stop_word(token: &str) -> bool {
    STOP_WORDS.contains(&token)
}

/// Numeral form of a number token, if it is one.
pub fn as_number(token: &str) -> Option<String> {
    if !token.is_empty() && token.chars().all(|c| c.is_ascii_digit()) {
        return Some(token.to_owned());
    }
    digit_word(token).map(str::to_owned)
}

pub fn extract_candidates(caption: &str) -> Vec<String> {
    let tokens = word_tokens(caption);

    let mut phrases: Vec<(usize, String)> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if is_stop_word(&tokens[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < tokens.len() && !is_stop_word(&tokens[i]) {
            i += 1;
        }
        let run = &tokens[start..i];
        let mut end = run.len();
        while end >= 2 {
            phrases.push((start + end - 2, format!("{} {}", run[end - 2], run[end - 1])));
            end -= 2;
        }
        if end == 1 && as_number(&run[0]).is_none() {
            phrases.push((start, run[0].clone()));
        }
    }
    phrases.sort_by_key(|(pos, _)| *pos);

    let numbers = tokens.iter().filter_map(|t| as_number(t));
    let keywords = tokens.iter().filter(|t| *t == "yes" || *t == "no").cloned();

    let mut out: Vec<String> = Vec::new();
    for candidate in phrases.into_iter().map(|(_, p)| p).chain(numbers).chain(keywords) {
        if !out.contains(&candidate) {
            out.push(candidate);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_examples() {
        assert_eq!(extract_candidates("two dogs on a red couch"), vec!["two dogs", "red couch", "2"]);
        assert_eq!(extract_candidates("yes"), vec!["yes"]);
        assert!(extract_candidates("it is on the of a").is_empty());
        assert!(extract_candidates("").is_empty());
    }

    #[test]
    fn long_runs_pair_from_the_right() {
        assert_eq!(extract_candidates("a black cat sleeping"), vec!["black", "cat sleeping"]);
        // leftover "two" is a number and only appears as "2"
        assert_eq!(extract_candidates("two red cars on the street"), vec!["red cars", "street", "2"]);
        assert_eq!(extract_candidates("a man riding a horse"), vec!["man riding", "horse"]);
    }

    #[test]
    fn numbers_and_keywords_dedup() {
        assert_eq!(extract_candidates("3 cats, three cats? no"), vec!["3 cats", "three cats", "3", "no"]);
    }
}
