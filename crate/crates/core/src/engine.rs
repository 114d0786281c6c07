//! The streaming pipeline: preprocess, parse, score, consult, window.
//!
//! Windows are scored when they close. Each distinct member template gets
//! its current rarity score, passes through the expert gate, and the window
//! is flagged when any fused score reaches the alarm threshold.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, EngineConfig};
use crate::evt::{DetectorConfig, EvtDetector, Scores};
use crate::expert::{
    fuse, ChainOutcome, Expert, ExpertError, ExpertFeedback, ExpertLoop, FixtureTransport,
    HttpTransport, HumanQueue, KnowledgeBase, LlmExpert, LoopConfig, PromptTemplate, Provenance,
    RuleExpert, Verdict,
};
use crate::preprocess::{preprocess, PreprocessConfig, PreprocessError, RawLine};
use crate::trie::{CatalogEntry, ClusterId, TrieConfig, TrieError, TrieParser};
use crate::windows::{close_window, ClusterScore, Placement, Window, WindowConfig, Windower};

/// Metadata that travels with a line but is not part of its text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LineMeta {
    /// Overrides the level found by the level pattern.
    pub level: Option<String>,
    /// Overrides the component found by the component pattern.
    pub component: Option<String>,
    /// Ground truth, when known.
    pub label: Option<bool>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineStats {
    pub processed: u64,
    pub malformed: u64,
    pub truncated: u64,
    pub late: u64,
    pub windows_closed: u64,
    pub queries_issued: u64,
    pub clusters: usize,
    pub trie_updates: u64,
}

/// One template in a catalog snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateInfo {
    pub cluster_id: ClusterId,
    pub template: String,
    pub rendered: String,
    pub count: u64,
    pub feedback: Option<ExpertFeedback>,
}

pub struct Engine {
    pre: PreprocessConfig,
    parser: TrieParser,
    detector: EvtDetector,
    experts: ExpertLoop,
    windower: Windower,
    now: i64,
    malformed: u64,
    truncated: u64,
    windows_closed: u64,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("stats", &self.stats()).finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(
        pre: PreprocessConfig,
        trie: TrieConfig,
        detector: DetectorConfig,
        expert: LoopConfig,
        windows: WindowConfig,
        kb: KnowledgeBase,
        chain: Vec<Box<dyn Expert>>,
    ) -> Result<Self, ConfigError> {
        let inv = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        let parser = TrieParser::new(trie, Arc::clone(pre.stopwords())).map_err(|e| inv(&e))?;
        Ok(Self {
            pre,
            parser,
            detector: EvtDetector::new(detector).map_err(|e| inv(&e))?,
            experts: ExpertLoop::new(expert, kb, chain).map_err(|e| inv(&e))?,
            windower: Windower::new(windows).map_err(|e| inv(&e))?,
            now: i64::MIN,
            malformed: 0,
            truncated: 0,
            windows_closed: 0,
        })
    }

    /// Builds the engine and its expert chain from a config file's contents.
    pub fn from_config(cfg: &EngineConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let pre = PreprocessConfig::from_settings(&cfg.preprocess)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let kb = match &cfg.knowledge_base.path {
            Some(p) => KnowledgeBase::open(p).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            None => KnowledgeBase::in_memory(),
        };
        let chain = build_chain(cfg)?;
        Self::new(
            pre,
            cfg.trie.clone(),
            cfg.detector.clone(),
            cfg.expert.clone(),
            cfg.windows.clone(),
            kb,
            chain,
        )
    }

    /// Feeds one line. Returns the windows it closed, already scored.
    pub fn ingest(&mut self, raw: RawLine, meta: LineMeta) -> Vec<Window> {
        let t = self.windower.timestamp_for(raw.timestamp);
        let closed = self.advance_to(t);
        let mut rec = match preprocess(&raw, &self.pre) {
            Ok(r) => r,
            Err(PreprocessError::MalformedLine { line_no, reason }) => {
                tracing::debug!(line_no, reason, "skipping malformed line");
                self.malformed += 1;
                return closed;
            }
            Err(e) => {
                tracing::warn!(error = %e, "skipping line");
                self.malformed += 1;
                return closed;
            }
        };
        self.truncated += u64::from(rec.truncated);
        if meta.level.is_some() {
            rec.level = meta.level;
        }
        if meta.component.is_some() {
            rec.component = meta.component;
        }
        if rec.timestamp.is_none() {
            rec.timestamp = Some(t);
        }
        let out = self.parser.process(&rec, Some(raw.text));
        self.apply_remaps(&out.remaps);
        let count = self
            .parser
            .cluster(out.cluster_id)
            .map_or(1, |c| c.count());
        self.detector.touch(out.cluster_id, count);
        if let Placement::Late = self.windower.add(t, rec.line_no, out.cluster_id, meta.label) {
            tracing::trace!(line_no = rec.line_no, "late record");
        }
        closed
    }

    /// Moves stream time forward: closes due windows and expires stale queries.
    pub fn advance_to(&mut self, t: i64) -> Vec<Window> {
        self.now = self.now.max(t);
        let mut closed = self.windower.advance(t);
        for w in &mut closed {
            self.score_window(w);
        }
        self.experts.expire(self.now);
        closed
    }

    /// Closes and scores every open window.
    pub fn flush(&mut self) -> Vec<Window> {
        let mut closed = self.windower.flush();
        for w in &mut closed {
            self.score_window(w);
        }
        closed
    }

    fn score_window(&mut self, w: &mut Window) {
        let scores = self.detector.scores();
        let mut ids: Vec<ClusterId> = w
            .member_clusters
            .iter()
            .map(|&c| self.parser.resolve(c))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        let mut out = Vec::with_capacity(ids.len());
        for cid in ids {
            let Some(cluster) = self.parser.cluster(cid) else {
                continue;
            };
            let tp = scores.get(cid);
            let (mut verdict, query) = self.experts.gate(cluster, tp, self.now);
            if let Some(q) = query {
                if let Ok(ChainOutcome::Answered(fb)) = self.experts.consult(q.query_id) {
                    if let Ok(v) = self.apply_feedback(q.query_id, fb) {
                        verdict = v;
                    }
                }
            }
            out.push(ClusterScore {
                cluster_id: cid,
                p: verdict.p,
            });
        }
        close_window(w, out.iter().map(|s| s.p), self.experts.config().alarm_threshold);
        w.scores = out;
        self.windows_closed += 1;
    }

    fn apply_remaps(&mut self, remaps: &[(ClusterId, ClusterId)]) {
        if remaps.is_empty() {
            return;
        }
        for &(gone, survivor) in remaps {
            let count = self.parser.cluster(survivor).map_or(0, |c| c.count());
            self.detector.remap(gone, survivor, count);
        }
        self.experts.remap(remaps);
    }

    /// Records an answer to a query. Repeated answers return the first result.
    pub fn apply_feedback(&mut self, query_id: u64, fb: ExpertFeedback) -> Result<Verdict, ExpertError> {
        let res = self.experts.resolve(query_id, fb)?;
        let cid = self.parser.resolve(res.cluster_id);
        let alarm = self.experts.config().alarm_threshold;
        if let (Some(tp), Some(p)) = (res.tp, res.p) {
            return Ok(Verdict {
                cluster_id: cid,
                tp,
                p,
                provenance: Provenance::Expert(res.feedback.source),
                anomalous: p >= alarm,
            });
        }
        let scores = self.detector.scores();
        let tp = if self.detector.count_list().get(cid).is_some() {
            scores.get(cid)
        } else {
            self.experts.query(query_id).map_or(0.0, |r| r.query.tp)
        };
        self.parser.set_feedback(cid, Some(res.feedback.for_cluster()));
        if let Some(c) = self.parser.cluster(cid) {
            if let Err(e) = self
                .experts
                .knowledge_base()
                .put(&c.template_text(), res.feedback.clone(), self.now.max(0))
            {
                tracing::warn!(error = %e, "knowledge base write failed");
            }
        }
        let p = fuse(tp, res.feedback.decision, res.feedback.confidence);
        self.experts.commit(&res, tp, p);
        Ok(Verdict {
            cluster_id: cid,
            tp,
            p,
            provenance: Provenance::Expert(res.feedback.source),
            anomalous: p >= alarm,
        })
    }

    /// Offers every pending query to `expert`. Returns how many it answered.
    pub fn answer_pending(&mut self, expert: &mut dyn Expert) -> usize {
        let queries: Vec<_> = self.experts.pending().into_iter().cloned().collect();
        let mut answered = 0;
        for q in queries {
            if let crate::expert::Consult::Answer(fb) = expert.consult(&q) {
                if self.apply_feedback(q.query_id, fb).is_ok() {
                    answered += 1;
                }
            }
        }
        answered
    }

    /// Updates a closed window after a cluster's score changed.
    pub fn revise_window(&self, w: &mut Window, cluster_id: ClusterId, p: f64) -> bool {
        let cid = self.parser.resolve(cluster_id);
        let mut hit = false;
        for s in &mut w.scores {
            if self.parser.resolve(s.cluster_id) == cid {
                s.p = p;
                hit = true;
            }
        }
        if hit {
            let before = w.predicted;
            close_window(w, w.scores.iter().map(|s| s.p).collect::<Vec<_>>(), self.experts.config().alarm_threshold);
            return before != w.predicted || hit;
        }
        false
    }

    /// Drops all cached expert decisions and lets every cluster be asked again.
    pub fn wipe_feedback(&mut self) {
        if let Err(e) = self.experts.knowledge_base().clear(self.now.max(0)) {
            tracing::warn!(error = %e, "knowledge base clear failed");
        }
        self.parser.clear_feedback();
        self.experts.reset_asked();
    }

    pub fn set_chain(&mut self, chain: Vec<Box<dyn Expert>>) {
        self.experts.set_chain(chain);
    }

    pub fn scores(&mut self) -> Arc<Scores> {
        self.detector.scores()
    }

    pub fn templates(&self) -> Vec<TemplateInfo> {
        let kb = self.experts.knowledge_base();
        self.parser
            .clusters()
            .map(|c| {
                let text = c.template_text();
                TemplateInfo {
                    cluster_id: c.id(),
                    feedback: kb.get(&text).or_else(|| {
                        c.feedback().map(|f| ExpertFeedback {
                            decision: f.decision,
                            confidence: f.confidence,
                            source: crate::expert::FeedbackSource::Cache,
                            rationale: None,
                        })
                    }),
                    template: text,
                    rendered: c.rendered(),
                    count: c.count(),
                }
            })
            .collect()
    }

    pub fn export_catalog(&self) -> Vec<CatalogEntry> {
        self.parser.export_catalog()
    }

    pub fn import_catalog(&mut self, entries: &[CatalogEntry]) -> Result<usize, TrieError> {
        Ok(self.parser.import_catalog(entries)?.len())
    }

    pub fn stats(&self) -> EngineStats {
        EngineStats {
            processed: self.parser.processed(),
            malformed: self.malformed,
            truncated: self.truncated,
            late: self.windower.late(),
            windows_closed: self.windows_closed,
            queries_issued: self.experts.issued(),
            clusters: self.parser.cluster_count(),
            trie_updates: self.parser.updates_run(),
        }
    }

    pub fn parser(&self) -> &TrieParser {
        &self.parser
    }

    pub fn parser_mut(&mut self) -> &mut TrieParser {
        &mut self.parser
    }

    pub fn detector(&self) -> &EvtDetector {
        &self.detector
    }

    pub fn experts(&self) -> &ExpertLoop {
        &self.experts
    }

    pub fn experts_mut(&mut self) -> &mut ExpertLoop {
        &mut self.experts
    }

    pub fn windower(&self) -> &Windower {
        &self.windower
    }

    /// Latest stream time seen, in milliseconds.
    pub fn now(&self) -> i64 {
        self.now
    }
}

fn build_chain(cfg: &EngineConfig) -> Result<Vec<Box<dyn Expert>>, ConfigError> {
    let inv = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
    let mut chain: Vec<Box<dyn Expert>> = Vec::new();
    for name in &cfg.expert.expert_chain {
        match name.as_str() {
            "human" => chain.push(Box::new(HumanQueue)),
            "rule" => {
                let path = cfg.rules.file.as_ref().expect("validated");
                chain.push(Box::new(RuleExpert::load(path).map_err(|e| inv(&e))?));
            }
            "llm" => {
                let prompt = match &cfg.llm.prompt_file {
                    Some(p) => PromptTemplate::new(&read(p)?),
                    None => PromptTemplate::shipped(),
                };
                let transport: Box<dyn crate::expert::Transport> = match (&cfg.llm.fixtures, &cfg.llm.url) {
                    (Some(f), _) => Box::new(FixtureTransport::load(f).map_err(|e| inv(&e))?),
                    (None, Some(url)) => Box::new(
                        HttpTransport::from_env(url.clone(), &cfg.llm.token_env, cfg.llm.timeout)
                            .map_err(|e| inv(&e))?,
                    ),
                    (None, None) => unreachable!("validated"),
                };
                chain.push(Box::new(LlmExpert::new(transport, prompt, cfg.llm.backoff)));
            }
            other => return Err(ConfigError::Invalid(format!("unknown expert {other:?}"))),
        }
    }
    Ok(chain)
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// A loop config for evaluation runs, where queries never time out.
pub fn eval_loop_config(query_threshold: f64) -> LoopConfig {
    LoopConfig {
        query_threshold,
        pending_timeout: Duration::from_secs(100 * 365 * 24 * 3600),
        expert_chain: Vec::new(),
        ..LoopConfig::default()
    }
}
