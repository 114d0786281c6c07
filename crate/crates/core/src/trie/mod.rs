//! Trie-based online log parser.
//!
//! Records descend a trie in three layers: a domain edge built from level and
//! component, a token-key edge built from the record's most frequent tokens,
//! and up to `d` prefix edges. Leaves hold log clusters. A periodic rebuild
//! merges clusters whose templates subsume one another.

mod cluster;
mod template;
mod vocab;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cluster::{
    ClusterFeedback, ClusterId, Decision, LogCluster, MemberIds, SampleLine, MAX_SAMPLES,
};
pub use template::{
    canonical_text, collapse_wildcards, glob_align, is_wildcard, jaccard, merge_templates,
    render_with_sample, template_regex, wildcard_count, TemplateMatcher,
};
pub use vocab::{token_key, TokenKey, Vocabulary};

use crate::preprocess::{LogRecord, PLACEHOLDER};
use template::jaccard_sorted;

/// Edge taken by records that run out of tokens before the prefix depth.
pub const END_EDGE: &str = "<END>";
/// Domain label part used when level or component is absent.
pub const UNKNOWN_DOMAIN: &str = "unknown";

#[derive(Debug, Error, PartialEq)]
pub enum TrieError {
    #[error("invalid trie config: {0}")]
    InvalidConfig(String),
    #[error("catalog entry {cluster_id} has an empty template")]
    EmptyTemplate { cluster_id: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrieConfig {
    pub token_key_len: usize,
    pub prefix_depth: usize,
    pub max_children: usize,
    pub match_threshold: f64,
    pub update_period: u64,
}

impl Default for TrieConfig {
    fn default() -> Self {
        Self {
            token_key_len: 3,
            prefix_depth: 3,
            max_children: 3,
            match_threshold: 0.5,
            update_period: 1_000_000,
        }
    }
}

impl TrieConfig {
    pub fn validate(&self) -> Result<(), TrieError> {
        let bad = |m: &str| Err(TrieError::InvalidConfig(m.to_string()));
        if self.token_key_len == 0 {
            return bad("token_key_len must be positive");
        }
        if self.max_children == 0 {
            return bad("max_children must be positive");
        }
        if !(0.0..=1.0).contains(&self.match_threshold) {
            return bad("match_threshold must lie in [0, 1]");
        }
        if self.update_period == 0 {
            return bad("update_period must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchOutcome {
    Exact,
    Partial,
    New,
}

/// Labels along a root-to-leaf path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutePath {
    pub domain: String,
    pub key: TokenKey,
    pub prefix: Vec<String>,
}

/// Result of one `process` call.
#[derive(Debug, Clone, PartialEq)]
pub struct Processed {
    pub cluster_id: ClusterId,
    pub outcome: MatchOutcome,
    /// `(deleted, survivor)` pairs when this call triggered a rebuild.
    pub remaps: Vec<(ClusterId, ClusterId)>,
}

/// One line of an exported template catalog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub cluster_id: u64,
    pub count: u64,
    #[serde(default = "unknown_domain")]
    pub domain: String,
    pub template: String,
}

fn unknown_domain() -> String {
    UNKNOWN_DOMAIN.to_string()
}

#[derive(Debug, Clone, Default)]
struct PrefixNode {
    children: HashMap<String, PrefixNode>,
    clusters: Vec<ClusterId>,
}

impl PrefixNode {
    fn literal_children(&self) -> usize {
        self.children.len()
            - usize::from(self.children.contains_key(PLACEHOLDER))
            - usize::from(self.children.contains_key(END_EDGE))
    }

    fn edge_for<'t>(&self, tok: &'t str, max_children: usize) -> &'t str {
        if tok == PLACEHOLDER || self.children.contains_key(tok) {
            tok
        } else if self.literal_children() < max_children {
            tok
        } else {
            PLACEHOLDER
        }
    }

    fn child_mut(&mut self, label: &str) -> &mut PrefixNode {
        if !self.children.contains_key(label) {
            self.children
                .insert(label.to_string(), PrefixNode::default());
        }
        self.children.get_mut(label).expect("child inserted above")
    }

    fn for_each_leaf(&mut self, f: &mut impl FnMut(&mut Vec<ClusterId>)) {
        if !self.clusters.is_empty() {
            f(&mut self.clusters);
        }
        for child in self.children.values_mut() {
            child.for_each_leaf(f);
        }
    }
}

type KeyLayer = HashMap<String, PrefixNode>;

fn descend<'a>(
    mut node: &'a mut PrefixNode,
    tokens: &[String],
    cfg: &TrieConfig,
    mut visit: impl FnMut(&str),
) -> &'a mut PrefixNode {
    for i in 0..cfg.prefix_depth {
        let Some(tok) = tokens.get(i) else {
            visit(END_EDGE);
            return node.child_mut(END_EDGE);
        };
        let label = node.edge_for(tok, cfg.max_children);
        visit(label);
        node = node.child_mut(label);
    }
    node
}

/// Edge label of the domain layer.
pub fn domain_label(level: Option<&str>, component: Option<&str>) -> String {
    match (level, component) {
        (None, None) => UNKNOWN_DOMAIN.to_string(),
        (l, c) => format!(
            "{}|{}",
            l.unwrap_or(UNKNOWN_DOMAIN),
            c.unwrap_or(UNKNOWN_DOMAIN)
        ),
    }
}

fn leaf_rank(
    clusters: &[Option<LogCluster>],
    id: ClusterId,
) -> (std::cmp::Reverse<u64>, ClusterId) {
    let count = clusters[id as usize].as_ref().map_or(0, LogCluster::count);
    (std::cmp::Reverse(count), id)
}

/// Single-writer parser state: vocabulary, trie and clusters.
#[derive(Debug, Clone)]
pub struct TrieParser {
    cfg: TrieConfig,
    stopwords: Arc<HashSet<String>>,
    vocab: Vocabulary,
    root: HashMap<String, KeyLayer>,
    clusters: Vec<Option<LogCluster>>,
    forward: Vec<ClusterId>,
    alive: usize,
    processed: u64,
    since_update: u64,
    updates: u64,
}

impl TrieParser {
    pub fn new(cfg: TrieConfig, stopwords: Arc<HashSet<String>>) -> Result<Self, TrieError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            stopwords,
            vocab: Vocabulary::new(),
            root: HashMap::new(),
            clusters: Vec::new(),
            forward: Vec::new(),
            alive: 0,
            processed: 0,
            since_update: 0,
            updates: 0,
        })
    }

    pub fn config(&self) -> &TrieConfig {
        &self.cfg
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Records processed so far.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    /// Rebuilds run so far.
    pub fn updates_run(&self) -> u64 {
        self.updates
    }

    pub fn cluster_count(&self) -> usize {
        self.alive
    }

    pub fn cluster(&self, id: ClusterId) -> Option<&LogCluster> {
        self.clusters.get(id as usize)?.as_ref()
    }

    /// Live clusters in id order.
    pub fn clusters(&self) -> impl Iterator<Item = &LogCluster> {
        self.clusters.iter().flatten()
    }

    /// Follows merge redirects to the surviving cluster id.
    pub fn resolve(&self, mut id: ClusterId) -> ClusterId {
        while let Some(&next) = self.forward.get(id as usize) {
            if next == id {
                break;
            }
            id = next;
        }
        id
    }

    pub fn set_feedback(&mut self, id: ClusterId, fb: Option<ClusterFeedback>) -> bool {
        let id = self.resolve(id);
        match self.clusters.get_mut(id as usize).and_then(Option::as_mut) {
            Some(c) => {
                c.set_feedback(fb);
                true
            }
            None => false,
        }
    }

    /// Drops all cached cluster feedback.
    pub fn clear_feedback(&mut self) {
        for c in self.clusters.iter_mut().flatten() {
            c.set_feedback(None);
        }
    }

    /// Token key of a record under the current vocabulary.
    pub fn token_key(&self, tokens: &[String]) -> TokenKey {
        token_key(tokens, &self.vocab, &self.stopwords, self.cfg.token_key_len)
    }

    /// Routes a record without updating the vocabulary, creating missing
    /// nodes, and returns the labels of the path taken.
    pub fn route(&mut self, rec: &LogRecord) -> RoutePath {
        let key = self.token_key(&rec.tokens);
        let domain = domain_label(rec.level.as_deref(), rec.component.as_deref());
        let mut prefix = Vec::new();
        let start = self
            .root
            .entry(domain.clone())
            .or_default()
            .entry(key.label())
            .or_default();
        descend(start, &rec.tokens, &self.cfg, |l| {
            prefix.push(l.to_string())
        });
        RoutePath {
            domain,
            key,
            prefix,
        }
    }

    /// Runs one record through the parser.
    ///
    /// `raw` is the original line, kept as a cluster sample.
    pub fn process(&mut self, rec: &LogRecord, raw: Option<String>) -> Processed {
        self.vocab.observe(&rec.tokens);
        let key = self.token_key(&rec.tokens);
        let domain = domain_label(rec.level.as_deref(), rec.component.as_deref());

        let Self {
            root,
            clusters,
            cfg,
            forward,
            alive,
            ..
        } = self;
        let layer = match root.get_mut(&domain) {
            Some(l) => l,
            None => root.entry(domain.clone()).or_default(),
        };
        let start = layer.entry(key.label()).or_default();
        let leaf = descend(start, &rec.tokens, cfg, |_| {});

        let (id, outcome) = match Self::match_in_leaf(leaf, clusters, rec, cfg) {
            Some((id, MatchOutcome::Partial)) => {
                let c = clusters[id as usize].as_mut().expect("leaf ids are live");
                let merged = merge_templates(c.template(), &rec.tokens);
                if merged != c.template() && wildcard_count(&merged) >= c.wildcard_count() {
                    c.set_template(merged);
                }
                (id, MatchOutcome::Partial)
            }
            Some(found) => found,
            None => {
                let id = clusters.len() as ClusterId;
                clusters.push(Some(LogCluster::new(id, domain, rec.tokens.clone())));
                forward.push(id);
                leaf.clusters.push(id);
                *alive += 1;
                (id, MatchOutcome::New)
            }
        };
        clusters[id as usize]
            .as_mut()
            .expect("matched cluster is live")
            .add_member(rec.line_no, rec.timestamp, raw);
        if outcome != MatchOutcome::New {
            let mut pos = leaf
                .clusters
                .iter()
                .position(|&c| c == id)
                .expect("id in leaf");
            while pos > 0 && leaf_rank(clusters, id) < leaf_rank(clusters, leaf.clusters[pos - 1]) {
                leaf.clusters.swap(pos, pos - 1);
                pos -= 1;
            }
        }

        self.processed += 1;
        self.since_update += 1;
        let remaps = if self.since_update >= self.cfg.update_period {
            self.trie_update()
        } else {
            Vec::new()
        };
        let cluster_id = self.resolve(id);
        Processed {
            cluster_id,
            outcome,
            remaps,
        }
    }

    fn match_in_leaf(
        leaf: &PrefixNode,
        clusters: &mut [Option<LogCluster>],
        rec: &LogRecord,
        cfg: &TrieConfig,
    ) -> Option<(ClusterId, MatchOutcome)> {
        if leaf.clusters.is_empty() {
            return None;
        }
        let text = canonical_text(&rec.tokens);
        for &id in &leaf.clusters {
            let c = clusters[id as usize].as_mut().expect("leaf ids are live");
            if c.matcher().is_match(&text) {
                return Some((id, MatchOutcome::Exact));
            }
        }
        let mut mine: Vec<&str> = rec.tokens.iter().map(String::as_str).collect();
        mine.sort_unstable();
        mine.dedup();
        let mut best: Option<(ClusterId, f64)> = None;
        for &id in &leaf.clusters {
            let c = clusters[id as usize].as_ref().expect("leaf ids are live");
            let sim = jaccard_sorted(c.unique_tokens(), &mine);
            if best.is_none_or(|(_, b)| sim > b) {
                best = Some((id, sim));
            }
        }
        match best {
            Some((id, sim)) if sim >= cfg.match_threshold => Some((id, MatchOutcome::Partial)),
            _ => None,
        }
    }

    /// Merges clusters whose templates subsume others, then rebuilds the
    /// trie from the survivors.
    ///
    /// Candidates are visited per domain, most wildcards first. A candidate
    /// absorbs every cluster whose template text its template fully matches.
    /// Only clusters containing all tokens of the candidate's token key are
    /// tested; a full match implies that containment. Token keys are
    /// recomputed from templates under the current vocabulary, so clusters
    /// split by early vocabulary drift meet again. Returns
    /// `(deleted, survivor)` pairs.
    pub fn trie_update(&mut self) -> Vec<(ClusterId, ClusterId)> {
        self.since_update = 0;
        self.updates += 1;
        let mut domains: BTreeMap<String, Vec<ClusterId>> = BTreeMap::new();
        for c in self.clusters.iter().flatten() {
            domains.entry(c.domain.clone()).or_default().push(c.id);
        }

        let mut remaps = Vec::new();
        for ids in domains.values_mut() {
            let mut postings: HashMap<String, Vec<ClusterId>> = HashMap::new();
            let mut texts: HashMap<ClusterId, String> = HashMap::with_capacity(ids.len());
            for &id in ids.iter() {
                let c = self.clusters[id as usize]
                    .as_ref()
                    .expect("grouped ids are live");
                let mut lowered: Vec<String> = c
                    .unique_tokens()
                    .iter()
                    .filter(|t| !is_wildcard(t))
                    .map(|t| vocab::lower(t).into_owned())
                    .collect();
                lowered.sort_unstable();
                lowered.dedup();
                for t in lowered {
                    postings.entry(t).or_default().push(id);
                }
                texts.insert(id, c.template_text());
            }
            ids.sort_by_key(|&id| {
                let c = self.clusters[id as usize]
                    .as_ref()
                    .expect("grouped ids are live");
                (std::cmp::Reverse(c.wildcard_count()), id)
            });
            for &a in ids.iter() {
                let Some(ca) = self.clusters[a as usize].as_ref() else {
                    continue;
                };
                let key = self.token_key(ca.template());
                let candidates: Vec<ClusterId> = match key.tokens() {
                    [] => ids.clone(),
                    toks => {
                        let mut lists: Vec<&Vec<ClusterId>> =
                            toks.iter().filter_map(|t| postings.get(t)).collect();
                        if lists.len() < toks.len() {
                            continue;
                        }
                        lists.sort_by_key(|l| l.len());
                        lists[0]
                            .iter()
                            .copied()
                            .filter(|id| lists[1..].iter().all(|l| l.binary_search(id).is_ok()))
                            .collect()
                    }
                };
                for b in candidates {
                    if b == a || self.clusters[b as usize].is_none() {
                        continue;
                    }
                    if self.matches(a, &texts[&b]) {
                        self.absorb(a, b);
                        remaps.push((b, a));
                    }
                }
            }
        }
        self.rebuild();
        remaps
    }

    fn matches(&mut self, id: ClusterId, text: &str) -> bool {
        self.clusters[id as usize]
            .as_mut()
            .expect("live cluster")
            .matcher()
            .is_match(text)
    }

    fn absorb(&mut self, survivor: ClusterId, gone: ClusterId) {
        let other = self.clusters[gone as usize].take().expect("live cluster");
        self.clusters[survivor as usize]
            .as_mut()
            .expect("live cluster")
            .absorb(other);
        self.forward[gone as usize] = survivor;
        self.alive -= 1;
    }

    fn rebuild(&mut self) {
        let mut root: HashMap<String, KeyLayer> = HashMap::new();
        for c in self.clusters.iter().flatten() {
            let key = self.token_key(c.template()).label();
            let start = root
                .entry(c.domain.clone())
                .or_default()
                .entry(key)
                .or_default();
            descend(start, c.template(), &self.cfg, |_| {})
                .clusters
                .push(c.id);
        }
        let clusters = &self.clusters;
        for layer in root.values_mut() {
            for node in layer.values_mut() {
                node.for_each_leaf(&mut |ids| ids.sort_by_key(|&id| leaf_rank(clusters, id)));
            }
        }
        self.root = root;
    }

    /// Catalog lines in cluster id order.
    pub fn export_catalog(&self) -> Vec<CatalogEntry> {
        self.clusters()
            .map(|c| CatalogEntry {
                cluster_id: c.id as u64,
                count: c.count(),
                domain: c.domain.clone(),
                template: c.template_text(),
            })
            .collect()
    }

    /// Warm-starts from an exported catalog. Imported clusters keep their
    /// counts as prior counts and feed the vocabulary with their templates.
    /// Returns `(exported id, new id)` pairs.
    pub fn import_catalog(
        &mut self,
        entries: &[CatalogEntry],
    ) -> Result<Vec<(u64, ClusterId)>, TrieError> {
        let mut parsed = Vec::with_capacity(entries.len());
        for e in entries {
            let template: Vec<String> = e.template.split_whitespace().map(str::to_string).collect();
            if template.is_empty() {
                return Err(TrieError::EmptyTemplate {
                    cluster_id: e.cluster_id,
                });
            }
            parsed.push((e, collapse_wildcards(template)));
        }
        let mut ids = Vec::with_capacity(parsed.len());
        for (e, template) in &parsed {
            self.vocab.add_weighted(template, e.count.max(1));
            self.vocab.add_lines(e.count.max(1));
        }
        for (e, template) in parsed {
            let id = self.clusters.len() as ClusterId;
            let cluster =
                LogCluster::new(id, e.domain.clone(), template).with_prior_count(e.count.max(1));
            self.clusters.push(Some(cluster));
            self.forward.push(id);
            self.alive += 1;
            ids.push((e.cluster_id, id));
        }
        self.rebuild();
        Ok(ids)
    }
}
