//! Template helpers: similarity, generalization and wildcard matching.
//!
//! A template is a token list in which `<*>` stands for any run of tokens,
//! possibly empty. Matching runs over the canonical text of a token list,
//! which is the tokens joined by single spaces.

use regex::Regex;

use crate::preprocess::PLACEHOLDER;

pub fn is_wildcard(tok: &str) -> bool {
    tok == PLACEHOLDER
}

pub fn wildcard_count(template: &[String]) -> usize {
    template.iter().filter(|t| is_wildcard(t)).count()
}

/// Tokens joined by single spaces.
pub fn canonical_text(tokens: &[String]) -> String {
    tokens.join(" ")
}

/// Jaccard similarity over the unique tokens of both lists; 1.0 when both
/// are empty.
pub fn jaccard(a: &[String], b: &[String]) -> f64 {
    let sa = sorted_unique(a);
    let sb = sorted_unique(b);
    jaccard_sorted(&sa, &sb)
}

pub(crate) fn sorted_unique(tokens: &[String]) -> Vec<&str> {
    let mut v: Vec<&str> = tokens.iter().map(String::as_str).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Jaccard similarity of two sorted, deduplicated slices.
pub(crate) fn jaccard_sorted<S: AsRef<str>, T: AsRef<str>>(a: &[S], b: &[T]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].as_ref().cmp(b[j].as_ref()) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    common as f64 / (a.len() + b.len() - common) as f64
}

/// Generalizes `template` with a partially matching record.
///
/// The longer list is the base (the template on a tie). Every base token not
/// shared by both lists becomes `<*>` and runs of `<*>` collapse to one.
pub fn merge_templates(template: &[String], rec_tokens: &[String]) -> Vec<String> {
    let common_a = sorted_unique(template);
    let common_b = sorted_unique(rec_tokens);
    let base = if rec_tokens.len() > template.len() {
        rec_tokens
    } else {
        template
    };
    let is_common =
        |t: &str| common_a.binary_search(&t).is_ok() && common_b.binary_search(&t).is_ok();
    let mut out: Vec<String> = Vec::with_capacity(base.len());
    for tok in base {
        let next = if is_common(tok) {
            tok.as_str()
        } else {
            PLACEHOLDER
        };
        if is_wildcard(next) && out.last().is_some_and(|l| is_wildcard(l)) {
            continue;
        }
        out.push(next.to_string());
    }
    out
}

/// Collapses runs of adjacent wildcards.
pub fn collapse_wildcards(tokens: Vec<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(tokens.len());
    for tok in tokens {
        if is_wildcard(&tok) && out.last().is_some_and(|l| is_wildcard(l)) {
            continue;
        }
        out.push(tok);
    }
    out
}

/// Regular expression that fully matches the canonical text of every token
/// list the template covers. Literals are escaped; each `<*>` becomes a lazy
/// `.*?` spanning whole tokens.
pub fn template_regex(template: &[String]) -> String {
    let mut pieces: Vec<Option<&str>> = Vec::with_capacity(template.len());
    for tok in template {
        if is_wildcard(tok) {
            if pieces.last() != Some(&None) {
                pieces.push(None);
            }
        } else {
            pieces.push(Some(tok));
        }
    }
    if pieces.iter().all(Option::is_none) {
        return if pieces.is_empty() {
            "^$".into()
        } else {
            "^.*?$".into()
        };
    }
    let mut re = String::from("^");
    let mut prev_literal = false;
    for (i, piece) in pieces.iter().enumerate() {
        match piece {
            Some(lit) => {
                if prev_literal {
                    re.push(' ');
                }
                re.push_str(&regex::escape(lit));
                prev_literal = true;
            }
            None if i == 0 => re.push_str("(?:.*? )?"),
            None => {
                re.push_str("(?: .*?)?");
                if i + 1 < pieces.len() {
                    re.push(' ');
                }
                prev_literal = false;
            }
        }
    }
    re.push('$');
    re
}

/// Compiled matcher for one template.
#[derive(Debug, Clone)]
pub struct TemplateMatcher {
    regex: Regex,
}

impl TemplateMatcher {
    pub fn new(template: &[String]) -> Self {
        let regex = Regex::new(&template_regex(template)).expect("escaped template regex compiles");
        Self { regex }
    }

    /// True iff the template fully matches the canonical text.
    pub fn is_match(&self, canonical: &str) -> bool {
        self.regex.is_match(canonical)
    }

    pub fn as_str(&self) -> &str {
        self.regex.as_str()
    }
}

/// Aligns a template with a token list. Returns, per template element, the
/// half-open token range it covers, or `None` when the template does not
/// match. Wildcards may cover zero tokens.
pub fn glob_align(template: &[String], tokens: &[String]) -> Option<Vec<(usize, usize)>> {
    let n = template.len();
    let m = tokens.len();
    // reach[i][j]: template[i..] matches tokens[j..]
    let mut reach = vec![vec![false; m + 1]; n + 1];
    reach[n][m] = true;
    for i in (0..n).rev() {
        for j in (0..=m).rev() {
            reach[i][j] = if is_wildcard(&template[i]) {
                reach[i + 1][j] || (j < m && reach[i][j + 1])
            } else {
                j < m && template[i] == tokens[j] && reach[i + 1][j + 1]
            };
        }
    }
    if !reach[0][0] {
        return None;
    }
    let mut spans = Vec::with_capacity(n);
    let mut j = 0;
    for i in 0..n {
        if is_wildcard(&template[i]) {
            let start = j;
            while !reach[i + 1][j] {
                j += 1;
            }
            spans.push((start, j));
        } else {
            spans.push((j, j + 1));
            j += 1;
        }
    }
    Some(spans)
}

/// Renders a template with the punctuation of a sample line.
///
/// `sample` is a masked line whose tokens the template matches; the text
/// spanned by each wildcard is replaced by `<*>`. Falls back to the canonical
/// text when the sample does not match.
pub fn render_with_sample(template: &[String], sample: &str) -> String {
    let spans = token_spans(sample);
    let tokens: Vec<String> = spans
        .iter()
        .map(|&(s, e)| sample[s..e].to_string())
        .collect();
    let Some(align) = glob_align(template, &tokens) else {
        return canonical_text(template);
    };
    let mut out = String::with_capacity(sample.len());
    let mut cursor = 0usize;
    for (elem, &(a, b)) in template.iter().zip(&align) {
        if !is_wildcard(elem) {
            continue;
        }
        if a == b {
            let at = if a == 0 { 0 } else { spans[a - 1].1 };
            out.push_str(&sample[cursor..at]);
            out.push_str(if a == 0 { "<*> " } else { " <*>" });
            cursor = at;
        } else {
            out.push_str(&sample[cursor..spans[a].0]);
            out.push_str(PLACEHOLDER);
            cursor = spans[b - 1].1;
        }
    }
    out.push_str(&sample[cursor..]);
    out
}

/// Byte spans of the tokens `tokenize` would produce.
fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut iter = text.char_indices();
    while let Some((i, c)) = iter.next() {
        if c.is_alphanumeric() {
            start.get_or_insert(i);
            continue;
        }
        if let Some(s) = start.take() {
            spans.push((s, i));
        }
        if c == '<' && bytes.get(i + 1) == Some(&b'*') && bytes.get(i + 2) == Some(&b'>') {
            spans.push((i, i + 3));
            iter.next();
            iter.next();
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::tokenize;
    use proptest::prelude::*;

    fn v(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn matches(template: &str, line: &str) -> bool {
        TemplateMatcher::new(&v(template)).is_match(&canonical_text(&tokenize(line)))
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard(&v("a b c"), &v("a b c")), 1.0);
        assert_eq!(jaccard(&v("a b"), &v("c d")), 0.0);
        assert_eq!(jaccard(&v("open file x"), &v("open file y")), 0.5);
        assert_eq!(jaccard(&[], &[]), 1.0);
        assert_eq!(jaccard(&v("a a b"), &v("a")), 0.5);
    }

    #[test]
    fn merge_examples() {
        assert_eq!(
            merge_templates(&v("open file alpha"), &v("open file beta")),
            v("open file <*>")
        );
        assert_eq!(merge_templates(&v("a b"), &v("a b")), v("a b"));
        assert_eq!(
            merge_templates(&v("deleted items obj1 obj2"), &v("deleted items <*>")),
            v("deleted items <*>")
        );
        assert_eq!(merge_templates(&v("x a"), &v("y a")), v("<*> a"));
        assert_eq!(merge_templates(&v("a b"), &v("a b c")), v("a b <*>"));
    }

    #[test]
    fn exact_match_examples() {
        assert!(matches("dumping <*>", "dumping item1, item2"));
        assert!(matches("dumping <*>", "dumping item0"));
        assert!(!matches("open file <*>", "close file x"));
        assert!(matches("deleted items <*>", "deleted items: a"));
        assert!(!matches("a <*> c", "a b d"));
        assert!(matches("a <*> c", "a c"));
        assert!(matches("<*> done", "job 4 done"));
        assert!(!matches("<*> done", "job 4 undone"));
        assert!(matches("<*>", "anything at all"));
        assert!(!matches("a.b", "axb"));
    }

    #[test]
    fn literal_never_absorbs_placeholder_text() {
        assert!(!matches("GET from", "GET <*> from"));
        assert!(matches("GET <*> from", "GET <*> from"));
    }

    #[test]
    fn render_keeps_punctuation() {
        let t = v("Finished task <*> in stage <*> TID <*>");
        let s = "Finished task <*> in stage <*> (TID <*>).";
        assert_eq!(render_with_sample(&t, s), s);
        let t = v("deleted items <*>");
        assert_eq!(
            render_with_sample(&t, "deleted items: obj1, obj2"),
            "deleted items: <*>"
        );
        assert_eq!(render_with_sample(&t, "deleted items"), "deleted items <*>");
        assert_eq!(render_with_sample(&v("<*> up"), "up"), "<*> up");
        assert_eq!(render_with_sample(&t, "unrelated"), "deleted items <*>");
    }

    fn token_list() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(
            prop_oneof![Just("a"), Just("b"), Just("c"), Just("<*>")],
            0..7,
        )
        .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn regex_agrees_with_token_glob(t in token_list(), tokens in token_list()) {
            let re = TemplateMatcher::new(&t);
            prop_assert_eq!(re.is_match(&canonical_text(&tokens)), glob_align(&t, &tokens).is_some());
        }

        #[test]
        fn merged_template_matches_its_base(a in token_list(), b in token_list()) {
            let merged = merge_templates(&a, &b);
            let base = if b.len() > a.len() { &b } else { &a };
            prop_assert!(TemplateMatcher::new(&merged).is_match(&canonical_text(base)));
        }

        #[test]
        fn merge_never_has_adjacent_wildcards(a in token_list(), b in token_list()) {
            let merged = merge_templates(&a, &b);
            prop_assert!(merged.windows(2).all(|w| !(is_wildcard(&w[0]) && is_wildcard(&w[1]))));
        }
    }
}
