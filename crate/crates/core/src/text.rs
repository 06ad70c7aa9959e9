//! Question/answer text normalization shared by the embedding, explanation
//! and answerer modules.

/// Articles and copulas dropped before similarity scoring.
pub const STOP_WORDS: &[&str] = &[
    "a", "an", "the", "is", "are", "was", "were", "be", "been", "being", "am",
];

/// Lowercase, split on non-alphanumerics, drop stop words.
pub fn tokenize(text: &str) -> Vec<String> {
    raw_tokens(text)
        .into_iter()
        .filter(|t| !STOP_WORDS.contains(&t.as_str()))
        .collect()
}

/// Lowercase alphanumeric runs, stop words kept.
pub fn raw_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Canonical form used for exact question matching: raw tokens joined by a
/// single space, so "Is there a clock?" and "is there a  clock" compare equal.
pub fn normalize_question(text: &str) -> String {
    raw_tokens(text).join(" ")
}
