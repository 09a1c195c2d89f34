//! Answer normalization.

const STRIPPED_PUNCTUATION: &[char] = &['.', ',', '?', '!', '\'', '"', ';', ':'];
const ARTICLES: &[&str] = &["a", "an", "the"];
const DIGIT_WORDS: &[(&str, &str)] = &[
    ("zero", "0"),
    ("one", "1"),
    ("two", "2"),
    ("three", "3"),
    ("four", "4"),
    ("five", "5"),
    ("six", "6"),
    ("seven", "7"),
    ("eight", "8"),
    ("nine", "9"),
    ("ten", "10"),
];

/// Canonical form used for every answer comparison in the engine.
///
/// Lowercases, removes `. , ? ! ' " ; :`, collapses whitespace, strips
/// leading articles and maps the digit words zero..ten to numerals. The
/// empty string is a legal output; callers treat it as "no answer".
pub fn normalize_answer(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let cleaned: String = lowered.chars().filter(|c| !STRIPPED_PUNCTUATION.contains(c)).collect();
    let mut tokens: Vec<&str> = cleaned.split_whitespace().collect();

    // Repeat until no leading article remains so the function is idempotent
    // ("the the cat" would otherwise need two passes).
    let mut start = 0;
    while start + 1 < tokens.len() && ARTICLES.contains(&tokens[start]) {
        start += 1;
    }
    tokens.drain(..start);

    tokens
        .iter()
        .map(|t| digit_word(t).unwrap_or(t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Numeral for a digit word, if it is one.
pub fn digit_word(token: &str) -> Option<&'static str> {
    DIGIT_WORDS.iter().find(|(w, _)| *w == token).map(|(_, n)| *n)
}

/// Lowercased alphanumeric word tokens; every other character separates.
pub(crate) fn word_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("Yellow "), "yellow");
        assert_eq!(normalize_answer("the stop sign."), "stop sign");
        assert_eq!(normalize_answer("Two"), "2");
        assert_eq!(normalize_answer("  An   Apple,  "), "apple");
        assert_eq!(normalize_answer("ten dogs"), "10 dogs");
        assert_eq!(normalize_answer("\"Yes!\""), "yes");
    }

    #[test]
    fn lone_article_is_kept() {
        // "a" with nothing after it is an answer, not an article.
        assert_eq!(normalize_answer("A"), "a");
        assert_eq!(normalize_answer("the a"), "a");
        assert_eq!(normalize_answer("the the cat"), "cat");
    }

    #[test]
    fn empty_and_punctuation_only() {
        assert_eq!(normalize_answer(""), "");
        assert_eq!(normalize_answer(" ?!. "), "");
    }

    #[test]
    fn word_tokens_split_on_punctuation() {
        assert_eq!(word_tokens("A red-couch, two dogs!"), vec!["a", "red", "couch", "two", "dogs"]);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize_answer(&s);
            prop_assert_eq!(normalize_answer(&once), once);
        }

        #[test]
        fn normalize_is_idempotent_on_wordy_input(
            words in proptest::collection::vec(
                prop_oneof![Just("the".to_string()), Just("A".to_string()), Just("two".to_string()),
                            Just(". ".to_string()), "[a-zA-Z]{1,6}"],
                0..8),
        ) {
            let s = words.join(" ");
            let once = normalize_answer(&s);
            prop_assert_eq!(normalize_answer(&once), once);
        }
    }
}
