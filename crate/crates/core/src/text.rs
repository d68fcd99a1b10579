//! Tokenization shared by the index and the query parser.

/// Splits `text` into lowercase tokens on every non-alphanumeric character.
///
/// Empty tokens are dropped; there is no stemming and no stopword list.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Whitespace-delimited words of `text`, in order.
pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
}
