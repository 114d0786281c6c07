//! Expert feedback: gating, fusion and the knowledge-base cache.
//!
//! Templates whose score exceeds the query threshold are sent once to a
//! chain of experts. The first expert that answers wins; an expert may also
//! defer, which leaves the query pending for a human. Answers are fused with
//! the detector score and cached by template text.

mod kb;
mod llm;
mod rules;
mod truth;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kb::{KbError, KbRecord, KnowledgeBase};
pub use llm::{
    parse_llm_response, FixtureTransport, HttpTransport, LlmExpert, LlmRequest, LlmResponse,
    PromptTemplate, Transport, TransportError, SHIPPED_PROMPT,
};
pub use rules::{Rule, RuleError, RuleExpert};
pub use truth::GroundTruthExpert;

use crate::trie::{ClusterFeedback, ClusterId, Decision, LogCluster, SampleLine};

#[derive(Debug, Error, PartialEq)]
pub enum ExpertError {
    #[error("confidence {0} is outside [0, 1]")]
    Confidence(f64),
    #[error("unknown query {0}")]
    UnknownQuery(u64),
    #[error("invalid loop config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackSource {
    Human,
    Rule,
    Llm,
    Cache,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertFeedback {
    pub decision: Decision,
    pub confidence: f64,
    pub source: FeedbackSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

impl ExpertFeedback {
    pub fn new(
        decision: Decision,
        confidence: f64,
        source: FeedbackSource,
    ) -> Result<Self, ExpertError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(ExpertError::Confidence(confidence));
        }
        Ok(Self {
            decision,
            confidence,
            source,
            rationale: None,
        })
    }

    pub fn with_rationale(mut self, rationale: impl Into<String>) -> Self {
        self.rationale = Some(rationale.into());
        self
    }

    pub fn for_cluster(&self) -> ClusterFeedback {
        ClusterFeedback {
            decision: self.decision,
            confidence: self.confidence,
        }
    }
}

/// Weighted average of the detector score and the expert's answer.
///
/// An anomaly answer gives `ep + (1 - ep) * tp`; a normal answer gives
/// `(1 - ep) * tp`.
pub fn fuse(tp: f64, decision: Decision, ep: f64) -> f64 {
    let tp = tp.clamp(0.0, 1.0);
    let ep = ep.clamp(0.0, 1.0);
    let p = match decision {
        Decision::Anomaly => ep + (1.0 - ep) * tp,
        Decision::Normal => 1.0 - (ep + (1.0 - ep) * (1.0 - tp)),
    };
    p.clamp(0.0, 1.0)
}

/// A request for an expert to judge one template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertQuery {
    pub query_id: u64,
    pub cluster_id: ClusterId,
    pub template_text: String,
    /// The template with the punctuation of its latest sample.
    pub rendered: String,
    pub tp: f64,
    pub sample_lines: Vec<SampleLine>,
    /// Milliseconds since the Unix epoch, in stream time.
    pub issued_at: i64,
}

/// What an expert did with a query.
#[derive(Debug, Clone, PartialEq)]
pub enum Consult {
    Answer(ExpertFeedback),
    /// Pass to the next expert.
    Abstain,
    /// Leave the query pending until an answer is submitted.
    Defer,
}

pub trait Expert: Send {
    fn name(&self) -> &str;
    fn consult(&mut self, query: &ExpertQuery) -> Consult;
}

/// Defers every query to a person using the feedback API.
#[derive(Debug, Default, Clone, Copy)]
pub struct HumanQueue;

impl Expert for HumanQueue {
    fn name(&self) -> &str {
        "human"
    }

    fn consult(&mut self, _query: &ExpertQuery) -> Consult {
        Consult::Defer
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub query_threshold: f64,
    pub alarm_threshold: f64,
    #[serde(with = "crate::config::serde_duration")]
    pub pending_timeout: Duration,
    /// Expert names in consultation order. Empty disables querying.
    pub expert_chain: Vec<String>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            query_threshold: 0.5,
            alarm_threshold: 0.5,
            pending_timeout: Duration::from_secs(600),
            expert_chain: vec!["human".to_string()],
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), ExpertError> {
        for (name, v) in [
            ("query_threshold", self.query_threshold),
            ("alarm_threshold", self.alarm_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ExpertError::InvalidConfig(format!(
                    "{name} must be in [0, 1], got {v}"
                )));
            }
        }
        let mut seen = HashSet::new();
        for name in &self.expert_chain {
            if !seen.insert(name) {
                return Err(ExpertError::InvalidConfig(format!(
                    "expert {name:?} listed twice"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "source", rename_all = "snake_case")]
pub enum Provenance {
    TdaOnly,
    Expert(FeedbackSource),
    Cached,
}

/// Scores of one template at one point in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub cluster_id: ClusterId,
    pub tp: f64,
    pub p: f64,
    pub provenance: Provenance,
    pub anomalous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum QueryState {
    Pending,
    Resolved { feedback: ExpertFeedback, tp: f64, p: f64 },
    /// Every expert in the chain abstained.
    Abstained,
    Expired,
    /// Evicted to respect the pending limit.
    Dropped,
}

impl QueryState {
    pub fn is_pending(&self) -> bool {
        matches!(self, Self::Pending)
    }

    pub fn is_resolved(&self) -> bool {
        matches!(self, Self::Resolved { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query: ExpertQuery,
    #[serde(flatten)]
    pub state: QueryState,
}

/// Result of running the chain on a fresh query.
#[derive(Debug, Clone, PartialEq)]
pub enum ChainOutcome {
    Answered(ExpertFeedback),
    Deferred,
    Abstained,
}

/// Result of resolving a query.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub query_id: u64,
    /// Cluster the query was issued for; it may since have been merged.
    pub cluster_id: ClusterId,
    pub feedback: ExpertFeedback,
    /// Template score and fused score stored at first resolution.
    pub tp: Option<f64>,
    pub p: Option<f64>,
    pub duplicate: bool,
}

/// Query bookkeeping for one engine run.
pub struct ExpertLoop {
    cfg: LoopConfig,
    kb: KnowledgeBase,
    chain: Vec<Box<dyn Expert>>,
    next_id: u64,
    queries: BTreeMap<u64, QueryRecord>,
    pending_by_cluster: HashMap<ClusterId, u64>,
    asked: HashSet<ClusterId>,
    max_pending: Option<usize>,
}

impl std::fmt::Debug for ExpertLoop {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExpertLoop")
            .field("cfg", &self.cfg)
            .field("chain", &self.chain.iter().map(|e| e.name()).collect::<Vec<_>>())
            .field("queries", &self.queries.len())
            .finish()
    }
}

impl ExpertLoop {
    pub fn new(
        cfg: LoopConfig,
        kb: KnowledgeBase,
        chain: Vec<Box<dyn Expert>>,
    ) -> Result<Self, ExpertError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            kb,
            chain,
            next_id: 1,
            queries: BTreeMap::new(),
            pending_by_cluster: HashMap::new(),
            asked: HashSet::new(),
            max_pending: None,
        })
    }

    pub fn config(&self) -> &LoopConfig {
        &self.cfg
    }

    pub fn knowledge_base(&self) -> &KnowledgeBase {
        &self.kb
    }

    /// Caps the number of pending queries; the lowest-scored are dropped.
    pub fn set_max_pending(&mut self, max: Option<usize>) {
        self.max_pending = max;
    }

    pub fn set_chain(&mut self, chain: Vec<Box<dyn Expert>>) {
        self.chain = chain;
    }

    pub fn querying_enabled(&self) -> bool {
        !self.chain.is_empty()
    }

    /// Feedback known for a cluster, from the knowledge base or the cluster.
    pub fn cached_feedback(&self, cluster: &LogCluster) -> Option<ExpertFeedback> {
        self.kb
            .get(&cluster.template_text())
            .or_else(|| {
                cluster.feedback().map(|f| ExpertFeedback {
                    decision: f.decision,
                    confidence: f.confidence,
                    source: FeedbackSource::Cache,
                    rationale: None,
                })
            })
    }

    /// Scores one cluster and, when it qualifies, issues a query for it.
    pub fn gate(
        &mut self,
        cluster: &LogCluster,
        tp: f64,
        now: i64,
    ) -> (Verdict, Option<ExpertQuery>) {
        if let Some(fb) = self.cached_feedback(cluster) {
            let p = fuse(tp, fb.decision, fb.confidence);
            return (self.verdict(cluster.id(), tp, p, Provenance::Cached), None);
        }
        let verdict = self.verdict(cluster.id(), tp, tp, Provenance::TdaOnly);
        if !self.querying_enabled()
            || tp <= self.cfg.query_threshold
            || self.pending_by_cluster.contains_key(&cluster.id())
            || self.asked.contains(&cluster.id())
        {
            return (verdict, None);
        }
        let query = ExpertQuery {
            query_id: self.next_id,
            cluster_id: cluster.id(),
            template_text: cluster.template_text(),
            rendered: cluster.rendered(),
            tp,
            sample_lines: cluster.samples().cloned().collect(),
            issued_at: now,
        };
        self.next_id += 1;
        self.asked.insert(cluster.id());
        self.pending_by_cluster.insert(cluster.id(), query.query_id);
        self.queries.insert(
            query.query_id,
            QueryRecord {
                query: query.clone(),
                state: QueryState::Pending,
            },
        );
        self.enforce_pending_limit();
        (verdict, Some(query))
    }

    pub fn verdict(&self, cluster_id: ClusterId, tp: f64, p: f64, provenance: Provenance) -> Verdict {
        Verdict {
            cluster_id,
            tp,
            p,
            provenance,
            anomalous: p >= self.cfg.alarm_threshold,
        }
    }

    /// Runs the expert chain on a pending query. Deferred queries stay pending;
    /// answered ones still need [`ExpertLoop::resolve`].
    pub fn consult(&mut self, query_id: u64) -> Result<ChainOutcome, ExpertError> {
        let query = match self.queries.get(&query_id) {
            Some(r) if r.state.is_pending() => r.query.clone(),
            Some(_) => return Ok(ChainOutcome::Abstained),
            None => return Err(ExpertError::UnknownQuery(query_id)),
        };
        for expert in &mut self.chain {
            match expert.consult(&query) {
                Consult::Answer(fb) => return Ok(ChainOutcome::Answered(fb)),
                Consult::Defer => return Ok(ChainOutcome::Deferred),
                Consult::Abstain => {}
            }
        }
        self.close(query_id, QueryState::Abstained);
        Ok(ChainOutcome::Abstained)
    }

    /// Marks a query answered. A repeated answer returns the stored result
    /// unchanged. Late answers to expired or abandoned queries are accepted.
    pub fn resolve(&mut self, query_id: u64, fb: ExpertFeedback) -> Result<Resolution, ExpertError> {
        if !(0.0..=1.0).contains(&fb.confidence) {
            return Err(ExpertError::Confidence(fb.confidence));
        }
        let rec = self
            .queries
            .get(&query_id)
            .ok_or(ExpertError::UnknownQuery(query_id))?;
        let cluster_id = rec.query.cluster_id;
        if let QueryState::Resolved { feedback, tp, p } = &rec.state {
            return Ok(Resolution {
                query_id,
                cluster_id,
                feedback: feedback.clone(),
                tp: Some(*tp),
                p: Some(*p),
                duplicate: true,
            });
        }
        Ok(Resolution {
            query_id,
            cluster_id,
            feedback: fb,
            tp: None,
            p: None,
            duplicate: false,
        })
    }

    /// Records the scores of a first resolution.
    pub fn commit(&mut self, res: &Resolution, tp: f64, p: f64) {
        if res.duplicate {
            return;
        }
        self.close(
            res.query_id,
            QueryState::Resolved {
                feedback: res.feedback.clone(),
                tp,
                p,
            },
        );
    }

    /// Expires pending queries older than the timeout. Returns their ids.
    pub fn expire(&mut self, now: i64) -> Vec<u64> {
        let timeout = i64::try_from(self.cfg.pending_timeout.as_millis()).unwrap_or(i64::MAX);
        let due: Vec<u64> = self
            .pending_by_cluster
            .values()
            .copied()
            .filter(|id| {
                self.queries[id].query.issued_at.saturating_add(timeout) <= now
            })
            .collect();
        for &id in &due {
            self.close(id, QueryState::Expired);
        }
        let mut due = due;
        due.sort_unstable();
        due
    }

    /// Re-keys pending state after clusters merge.
    pub fn remap(&mut self, remaps: &[(ClusterId, ClusterId)]) {
        for &(gone, survivor) in remaps {
            if self.asked.remove(&gone) {
                self.asked.insert(survivor);
            }
            if let Some(q) = self.pending_by_cluster.remove(&gone) {
                if self.pending_by_cluster.contains_key(&survivor) {
                    self.pending_by_cluster.insert(gone, q);
                } else {
                    self.pending_by_cluster.insert(survivor, q);
                }
            }
        }
    }

    /// Forgets which clusters were asked, so they can be asked again.
    pub fn reset_asked(&mut self) {
        self.asked.clear();
    }

    pub fn query(&self, query_id: u64) -> Option<&QueryRecord> {
        self.queries.get(&query_id)
    }

    pub fn queries(&self) -> impl Iterator<Item = &QueryRecord> {
        self.queries.values()
    }

    /// Pending queries, highest score first, then by id.
    pub fn pending(&self) -> Vec<&ExpertQuery> {
        let mut v: Vec<&ExpertQuery> = self
            .pending_by_cluster
            .values()
            .map(|id| &self.queries[id].query)
            .collect();
        v.sort_by(|a, b| b.tp.total_cmp(&a.tp).then(a.query_id.cmp(&b.query_id)));
        v
    }

    pub fn pending_count(&self) -> usize {
        self.pending_by_cluster.len()
    }

    pub fn issued(&self) -> u64 {
        self.next_id - 1
    }

    fn close(&mut self, query_id: u64, state: QueryState) {
        if let Some(rec) = self.queries.get_mut(&query_id) {
            rec.state = state;
            self.pending_by_cluster.retain(|_, v| *v != query_id);
        }
    }

    fn enforce_pending_limit(&mut self) {
        let Some(max) = self.max_pending else { return };
        while self.pending_by_cluster.len() > max {
            let lowest = self
                .pending()
                .last()
                .map(|q| q.query_id)
                .expect("non-empty");
            self.close(lowest, QueryState::Dropped);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fb(decision: Decision, ep: f64) -> ExpertFeedback {
        ExpertFeedback::new(decision, ep, FeedbackSource::Human).unwrap()
    }

    #[test]
    fn fuse_examples() {
        for tp in [0.0, 0.3, 1.0] {
            assert_eq!(fuse(tp, Decision::Anomaly, 1.0), 1.0);
            assert_eq!(fuse(tp, Decision::Normal, 1.0), 0.0);
        }
        assert!((fuse(0.5, Decision::Anomaly, 0.8) - 0.9).abs() < 1e-12);
        assert!((fuse(0.5, Decision::Normal, 0.6) - 0.2).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn fusion_bounds(tp in 0.0f64..=1.0, ep in 0.0f64..=1.0) {
            let up = fuse(tp, Decision::Anomaly, ep);
            let down = fuse(tp, Decision::Normal, ep);
            prop_assert!((0.0..=1.0).contains(&up));
            prop_assert!((0.0..=1.0).contains(&down));
            prop_assert!(up >= ep - 1e-12 && up >= tp - 1e-12);
            // Independent form of the normal branch.
            prop_assert!((down - (1.0 - ep) * tp).abs() < 1e-12);
            prop_assert!(down <= tp.min(1.0 - ep) + 1e-12);
        }
    }

    #[test]
    fn feedback_rejects_bad_confidence() {
        assert_eq!(
            ExpertFeedback::new(Decision::Anomaly, 1.5, FeedbackSource::Rule),
            Err(ExpertError::Confidence(1.5))
        );
        assert!(ExpertFeedback::new(Decision::Anomaly, f64::NAN, FeedbackSource::Rule).is_err());
    }

    #[test]
    fn feedback_json_shape() {
        let f = fb(Decision::Anomaly, 0.9).with_rationale("disk");
        let v = serde_json::to_value(&f).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"decision": "anomaly", "confidence": 0.9, "source": "human", "rationale": "disk"})
        );
    }

    fn cluster(id: ClusterId, template: &str) -> LogCluster {
        LogCluster::new(id, "unknown".into(), template.split(' ').map(String::from).collect())
    }

    fn human_loop() -> ExpertLoop {
        ExpertLoop::new(LoopConfig::default(), KnowledgeBase::in_memory(), vec![Box::new(HumanQueue)]).unwrap()
    }

    #[test]
    fn below_gate_no_query() {
        let mut l = human_loop();
        let (v, q) = l.gate(&cluster(0, "a b"), 0.3, 0);
        assert!(q.is_none());
        assert_eq!((v.p, v.provenance, v.anomalous), (0.3, Provenance::TdaOnly, false));
        let (_, q) = l.gate(&cluster(0, "a b"), 0.5, 0);
        assert!(q.is_none(), "gate is strict");
    }

    #[test]
    fn cache_hit_fuses_without_query() {
        let mut l = human_loop();
        l.knowledge_base().put("a b", fb(Decision::Normal, 1.0), 0).unwrap();
        let (v, q) = l.gate(&cluster(0, "a b"), 0.9, 0);
        assert!(q.is_none());
        assert_eq!((v.p, v.provenance, v.anomalous), (0.0, Provenance::Cached, false));
    }

    #[test]
    fn cluster_feedback_is_a_cache_too() {
        let mut l = human_loop();
        let mut c = cluster(0, "a b");
        c.set_feedback(Some(ClusterFeedback { decision: Decision::Anomaly, confidence: 0.9 }));
        let (v, q) = l.gate(&c, 0.1, 0);
        assert!(q.is_none());
        assert!((v.p - 0.91).abs() < 1e-12);
        assert!(v.anomalous);
    }

    #[test]
    fn one_query_per_cluster() {
        let mut l = human_loop();
        let c = cluster(4, "a b");
        let (v, q) = l.gate(&c, 0.9, 100);
        let q = q.unwrap();
        assert_eq!((q.query_id, q.cluster_id, q.tp, q.issued_at), (1, 4, 0.9, 100));
        assert_eq!(q.template_text, "a b");
        assert_eq!(v.p, 0.9);
        assert!(l.gate(&c, 0.95, 101).1.is_none(), "pending");
        l.expire(i64::MAX);
        assert!(l.gate(&c, 0.95, 102).1.is_none(), "already asked");
        assert_eq!(l.issued(), 1);
        let (_, q2) = l.gate(&cluster(5, "c"), 0.8, 103);
        assert_eq!(q2.unwrap().query_id, 2);
    }

    #[test]
    fn resolution_is_idempotent() {
        let mut l = human_loop();
        let q = l.gate(&cluster(1, "x y"), 0.9, 0).1.unwrap();
        assert_eq!(l.consult(q.query_id), Ok(ChainOutcome::Deferred));
        assert_eq!(l.pending().len(), 1);
        let res = l.resolve(q.query_id, fb(Decision::Anomaly, 0.9)).unwrap();
        assert!(!res.duplicate);
        let p = fuse(0.9, res.feedback.decision, res.feedback.confidence);
        assert!(p >= 0.9);
        l.commit(&res, 0.9, p);
        assert!(l.pending().is_empty());
        let again = l.resolve(q.query_id, fb(Decision::Normal, 1.0)).unwrap();
        assert!(again.duplicate);
        assert_eq!(again.p, Some(p));
        assert_eq!(again.tp, Some(0.9));
        assert_eq!(again.feedback.decision, Decision::Anomaly);
        assert_eq!(l.resolve(99, fb(Decision::Normal, 1.0)), Err(ExpertError::UnknownQuery(99)));
    }

    #[test]
    fn expiry_after_timeout() {
        let mut l = human_loop();
        let q = l.gate(&cluster(1, "x"), 0.9, 1_000).1.unwrap();
        assert!(l.expire(1_000 + 599_999).is_empty());
        assert_eq!(l.expire(1_000 + 600_000), vec![q.query_id]);
        assert_eq!(l.query(q.query_id).unwrap().state, QueryState::Expired);
        assert_eq!(l.pending_count(), 0);
        // Late answers still land.
        assert!(!l.resolve(q.query_id, fb(Decision::Normal, 1.0)).unwrap().duplicate);
    }

    #[test]
    fn pending_sorted_and_capped() {
        let mut l = human_loop();
        l.set_max_pending(Some(2));
        l.gate(&cluster(1, "a"), 0.7, 0);
        l.gate(&cluster(2, "b"), 0.9, 0);
        l.gate(&cluster(3, "c"), 0.8, 0);
        let tps: Vec<f64> = l.pending().iter().map(|q| q.tp).collect();
        assert_eq!(tps, vec![0.9, 0.8]);
        assert_eq!(l.query(1).unwrap().state, QueryState::Dropped);
    }

    #[test]
    fn empty_chain_disables_queries() {
        let mut l = ExpertLoop::new(LoopConfig::default(), KnowledgeBase::in_memory(), Vec::new()).unwrap();
        assert!(l.gate(&cluster(1, "a"), 0.99, 0).1.is_none());
    }

    #[test]
    fn chain_falls_through_abstentions() {
        let rules = RuleExpert::new(vec![Rule::new("disk", Decision::Anomaly, 0.8).unwrap()]);
        let mut l = ExpertLoop::new(
            LoopConfig::default(),
            KnowledgeBase::in_memory(),
            vec![Box::new(rules), Box::new(HumanQueue)],
        )
        .unwrap();
        let q = l.gate(&cluster(1, "disk full"), 0.9, 0).1.unwrap();
        match l.consult(q.query_id).unwrap() {
            ChainOutcome::Answered(f) => assert_eq!(f.source, FeedbackSource::Rule),
            other => panic!("{other:?}"),
        }
        let q = l.gate(&cluster(2, "cpu hot"), 0.9, 0).1.unwrap();
        assert_eq!(l.consult(q.query_id), Ok(ChainOutcome::Deferred));

        let mut only_rules = ExpertLoop::new(
            LoopConfig::default(),
            KnowledgeBase::in_memory(),
            vec![Box::new(RuleExpert::default())],
        )
        .unwrap();
        let q = only_rules.gate(&cluster(1, "x"), 0.9, 0).1.unwrap();
        assert_eq!(only_rules.consult(q.query_id), Ok(ChainOutcome::Abstained));
        assert_eq!(only_rules.query(q.query_id).unwrap().state, QueryState::Abstained);
    }

    #[test]
    fn remap_moves_pending_to_survivor() {
        let mut l = human_loop();
        let q = l.gate(&cluster(7, "a <*>"), 0.9, 0).1.unwrap();
        l.remap(&[(7, 3)]);
        assert!(l.gate(&cluster(3, "a <*>"), 0.9, 0).1.is_none());
        assert_eq!(l.pending()[0].query_id, q.query_id);
        assert_eq!(l.expire(i64::MAX), vec![q.query_id]);
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = LoopConfig::default();
        assert_eq!(c.query_threshold, 0.5);
        assert_eq!(c.alarm_threshold, 0.5);
        assert_eq!(c.pending_timeout, Duration::from_secs(600));
        let bad = LoopConfig {
            query_threshold: 1.2,
            ..LoopConfig::default()
        };
        assert!(bad.validate().is_err());
        let dup = LoopConfig {
            expert_chain: vec!["rule".into(), "rule".into()],
            ..LoopConfig::default()
        };
        assert!(dup.validate().is_err());
    }
}
