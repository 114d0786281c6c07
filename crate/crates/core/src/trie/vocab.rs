use std::borrow::Cow;
use std::collections::{HashMap, HashSet};

use crate::preprocess::PLACEHOLDER;

/// Lowercase token occurrence counts.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    counts: HashMap<Box<str>, u64>,
    total_lines: u64,
}

pub(crate) fn lower(tok: &str) -> Cow<'_, str> {
    if tok.bytes().any(|b| b.is_ascii_uppercase() || !b.is_ascii()) {
        Cow::Owned(tok.to_lowercase())
    } else {
        Cow::Borrowed(tok)
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts every token occurrence of one record. The placeholder is skipped.
    pub fn observe(&mut self, tokens: &[String]) {
        self.add_weighted(tokens, 1);
        self.total_lines += 1;
    }

    /// Adds `weight` occurrences of each token without counting a line.
    pub fn add_weighted(&mut self, tokens: &[String], weight: u64) {
        for tok in tokens {
            if tok == PLACEHOLDER {
                continue;
            }
            let l = lower(tok);
            match self.counts.get_mut(l.as_ref()) {
                Some(c) => *c += weight,
                None => {
                    self.counts.insert(l.into_owned().into_boxed_str(), weight);
                }
            }
        }
    }

    pub fn count(&self, tok: &str) -> u64 {
        self.counts.get(lower(tok).as_ref()).copied().unwrap_or(0)
    }

    pub fn total_lines(&self) -> u64 {
        self.total_lines
    }

    pub(crate) fn add_lines(&mut self, n: u64) {
        self.total_lines += n;
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }
}

/// The routing key of a record: up to K frequent tokens, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TokenKey {
    tokens: Vec<String>,
}

impl TokenKey {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Edge label used in the trie.
    pub fn label(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Picks the `k` tokens with the highest vocabulary count, skipping stopwords
/// and the placeholder. Ties go to the lexicographically smaller token.
pub fn token_key(
    tokens: &[String],
    vocab: &Vocabulary,
    stopwords: &HashSet<String>,
    k: usize,
) -> TokenKey {
    let mut distinct: Vec<Cow<'_, str>> = tokens
        .iter()
        .filter(|t| t.as_str() != PLACEHOLDER)
        .map(|t| lower(t))
        .filter(|l| !stopwords.contains(l.as_ref()))
        .collect();
    distinct.sort_unstable();
    distinct.dedup();
    let mut ranked: Vec<(u64, Cow<'_, str>)> =
        distinct.into_iter().map(|t| (vocab.count(&t), t)).collect();
    ranked.sort_unstable_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    ranked.truncate(k);
    let mut tokens: Vec<String> = ranked.into_iter().map(|(_, t)| t.into_owned()).collect();
    tokens.sort_unstable();
    TokenKey { tokens }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    fn vocab_with(entries: &[(&str, u64)]) -> Vocabulary {
        let mut vocab = Vocabulary::new();
        for (tok, n) in entries {
            vocab.add_weighted(&v(&[tok]), *n);
        }
        vocab
    }

    #[test]
    fn most_frequent_tokens_sorted() {
        let vocab = vocab_with(&[("open", 100), ("file", 50), ("x", 1)]);
        let key = token_key(
            &v(&["open", "file", "x", "open"]),
            &vocab,
            &HashSet::new(),
            2,
        );
        assert_eq!(key.tokens(), v(&["file", "open"]).as_slice());
    }

    #[test]
    fn all_placeholders_give_empty_key() {
        let key = token_key(&v(&["<*>", "<*>"]), &Vocabulary::new(), &HashSet::new(), 3);
        assert!(key.is_empty());
        assert_eq!(key.label(), "");
    }

    #[test]
    fn ties_break_lexicographically() {
        let vocab = vocab_with(&[("beta", 5), ("alpha", 5), ("gamma", 5)]);
        let key = token_key(&v(&["gamma", "beta", "alpha"]), &vocab, &HashSet::new(), 2);
        assert_eq!(key.tokens(), v(&["alpha", "beta"]).as_slice());
    }

    #[test]
    fn stopwords_excluded_and_case_folded() {
        let vocab = vocab_with(&[("the", 1000), ("disk", 10), ("full", 3)]);
        let stop: HashSet<String> = ["the".to_string()].into();
        let key = token_key(&v(&["The", "DISK", "full"]), &vocab, &stop, 3);
        assert_eq!(key.tokens(), v(&["disk", "full"]).as_slice());
    }

    #[test]
    fn observe_counts_occurrences() {
        let mut vocab = Vocabulary::new();
        vocab.observe(&v(&["Open", "open", "<*>", "file"]));
        assert_eq!(vocab.count("OPEN"), 2);
        assert_eq!(vocab.count("file"), 1);
        assert_eq!(vocab.count("<*>"), 0);
        assert_eq!(vocab.total_lines(), 1);
        assert_eq!(vocab.distinct(), 2);
    }
}
