//! Caption tokenization shared by length control and the diversity metrics.

/// Lowercased whitespace tokens with surrounding punctuation trimmed.
/// Tokens made only of punctuation are dropped.
pub fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

pub fn word_count(text: &str) -> usize {
    words(text).len()
}

/// Contiguous `n`-grams of a token list.
pub fn ngrams(tokens: &[String], n: usize) -> impl Iterator<Item = &[String]> {
    tokens.windows(n.max(1)).filter(move |_| n > 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn punctuation_tokens_do_not_count() {
        assert_eq!(words("A boat, sits  at the dock ."), vec!["a", "boat", "sits", "at", "the", "dock"]);
        assert_eq!(word_count(" -- ! "), 0);
        assert_eq!(word_count("don't stop"), 2);
    }

    #[test]
    fn bigrams() {
        let w = words("a dog runs");
        let g: Vec<_> = ngrams(&w, 2).map(|g| g.join(" ")).collect();
        assert_eq!(g, vec!["a dog", "dog runs"]);
        assert_eq!(ngrams(&w, 4).count(), 0);
        assert_eq!(ngrams(&w, 0).count(), 0);
    }
}
