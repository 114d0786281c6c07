//! Brute-force clustering used to check the trie parser on small corpora.
//!
//! Lines are linked when the Jaccard similarity of their token sets reaches
//! the match threshold, and clusters are the connected components of that
//! graph. This is quadratic and only meant for a few hundred lines.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::preprocess::{preprocess, PreprocessConfig, RawLine};
use crate::trie::{TrieConfig, TrieParser};

/// A partition as a sorted set of sorted line-number groups.
pub type Partition = BTreeSet<Vec<u64>>;

fn jaccard(a: &HashSet<&str>, b: &HashSet<&str>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Groups token lists by pairwise Jaccard at or above `threshold`, closed
/// under transitivity.
pub fn jaccard_partition(lines: &[(u64, Vec<String>)], threshold: f64) -> Partition {
    let sets: Vec<HashSet<&str>> = lines
        .iter()
        .map(|(_, toks)| toks.iter().map(String::as_str).collect())
        .collect();
    let mut parent: Vec<usize> = (0..lines.len()).collect();
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            if jaccard(&sets[i], &sets[j]) >= threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<u64>> = HashMap::new();
    for (i, (line_no, _)) in lines.iter().enumerate() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(*line_no);
    }
    groups
        .into_values()
        .map(|mut g| {
            g.sort_unstable();
            g
        })
        .collect()
}

/// The parser's current partition of the lines it has seen.
pub fn trie_partition(parser: &TrieParser) -> Partition {
    parser
        .clusters()
        .map(|c| c.members().iter().collect::<Vec<u64>>())
        .filter(|g| !g.is_empty())
        .collect()
}

/// A random corpus of `lines` lines from at most `max_templates` templates,
/// each parameter a single alphabetic token drawn from values of its own
/// template. Every template has at least
/// three fixed words per parameter, so two lines of one template always
/// share at least half their tokens.
pub fn random_corpus(seed: u64, lines: usize, max_templates: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let word = |rng: &mut ChaCha8Rng, prefix: &str| {
        const C: &[u8] = b"bcdfghjklmnprstvwz";
        const V: &[u8] = b"aeiou";
        let mut s = prefix.to_string();
        for _ in 0..rng.random_range(3..=4) {
            s.push(C[rng.random_range(0..C.len())] as char);
            s.push(V[rng.random_range(0..V.len())] as char);
        }
        s
    };
    let n_templates = rng.random_range(2..=max_templates.max(2));
    let templates: Vec<Vec<Option<String>>> = (0..n_templates)
        .map(|_| {
            let params = rng.random_range(1..=2);
            let fixed = rng.random_range(3 * params..=3 * params + 3);
            let mut parts: Vec<Option<String>> = (0..fixed).map(|_| Some(word(&mut rng, ""))).collect();
            for _ in 0..params {
                let at = rng.random_range(0..=parts.len());
                parts.insert(at, None);
            }
            parts
        })
        .collect();
    let values: Vec<Vec<String>> = (0..templates.len())
        .map(|_| (0..30).map(|_| word(&mut rng, "v")).collect())
        .collect();
    (0..lines)
        .map(|_| {
            let ti = rng.random_range(0..templates.len());
            let values = &values[ti];
            templates[ti]
                .iter()
                .map(|p| match p {
                    Some(w) => w.clone(),
                    None => values[rng.random_range(0..values.len())].clone(),
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleOutcome {
    Equal,
    /// Equal after one rebuild.
    Repaired,
    Different,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub corpora: usize,
    pub equal: usize,
    pub repaired: usize,
    pub different: usize,
    pub outcomes: Vec<OracleOutcome>,
}

/// Parses one corpus and compares the trie's partition with the oracle's.
pub fn compare_corpus(lines: &[String], pre: &PreprocessConfig, trie: &TrieConfig) -> OracleOutcome {
    let mut parser = TrieParser::new(trie.clone(), Arc::clone(pre.stopwords())).expect("valid trie config");
    let mut tokens = Vec::with_capacity(lines.len());
    for (i, text) in lines.iter().enumerate() {
        let Ok(rec) = preprocess(&RawLine::new(i as u64, text.as_str()), pre) else {
            continue;
        };
        parser.process(&rec, None);
        tokens.push((i as u64, rec.tokens));
    }
    let oracle = jaccard_partition(&tokens, trie.match_threshold);
    if trie_partition(&parser) == oracle {
        return OracleOutcome::Equal;
    }
    parser.trie_update();
    if trie_partition(&parser) == oracle {
        OracleOutcome::Repaired
    } else {
        OracleOutcome::Different
    }
}

/// Runs `corpora` random corpora with seeds `0..corpora`.
pub fn run_oracle(corpora: usize, lines: usize, max_templates: usize, pre: &PreprocessConfig, trie: &TrieConfig) -> OracleSummary {
    let outcomes: Vec<OracleOutcome> = (0..corpora as u64)
        .map(|seed| compare_corpus(&random_corpus(seed, lines, max_templates), pre, trie))
        .collect();
    let count = |o| outcomes.iter().filter(|&&x| x == o).count();
    OracleSummary {
        corpora,
        equal: count(OracleOutcome::Equal),
        repaired: count(OracleOutcome::Repaired),
        different: count(OracleOutcome::Different),
        outcomes,
    }
}
