//! Offline, feedback-free and online evaluation runs over a labeled dataset.
//!
//! Splits are taken by line index and then moved back to the start of the
//! window holding the split line, so no window straddles train and test.
//! Training answers every query from dataset labels. Testing issues queries
//! but leaves them unanswered; cached decisions from training still apply.

use std::ops::Range;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::LabeledDataset;
use super::metrics::{compute_metrics, MetricsError, MetricsReport};
use super::split::{align_cut, effective_times, split_at_fraction, split_offline, split_online};
use crate::config::{ConfigError, EngineConfig};
use crate::engine::{eval_loop_config, Engine, EngineStats, LineMeta};
use crate::evt::DetectorConfig;
use crate::expert::{Expert, GroundTruthExpert, HumanQueue, KnowledgeBase};
use crate::preprocess::{default_masking_config, PreprocessConfig, RawLine};
use crate::trie::TrieConfig;
use crate::windows::{Window, WindowConfig};

/// Chunks in the online protocol.
pub const ONLINE_CHUNKS: usize = 6;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Everything an evaluation run needs except the expert chain.
#[derive(Debug, Clone)]
pub struct EvalSetup {
    pub pre: PreprocessConfig,
    pub trie: TrieConfig,
    pub detector: DetectorConfig,
    pub windows: WindowConfig,
    pub query_threshold: f64,
    pub alarm_threshold: f64,
}

impl Default for EvalSetup {
    /// Default masks and fixed one-hour windows.
    fn default() -> Self {
        Self {
            pre: default_masking_config(),
            trie: TrieConfig::default(),
            detector: DetectorConfig::default(),
            windows: WindowConfig::fixed(Duration::from_secs(3600)),
            query_threshold: 0.5,
            alarm_threshold: 0.5,
        }
    }
}

impl EvalSetup {
    pub fn from_config(cfg: &EngineConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self {
            pre: PreprocessConfig::from_settings(&cfg.preprocess)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?,
            trie: cfg.trie.clone(),
            detector: cfg.detector.clone(),
            windows: cfg.windows.clone(),
            query_threshold: cfg.expert.query_threshold,
            alarm_threshold: cfg.expert.alarm_threshold,
        })
    }

    /// A fresh engine with an empty in-memory knowledge base.
    pub fn engine(&self, chain: Vec<Box<dyn Expert>>) -> Result<Engine, ConfigError> {
        let mut lc = eval_loop_config(self.query_threshold);
        lc.alarm_threshold = self.alarm_threshold;
        Engine::new(
            self.pre.clone(),
            self.trie.clone(),
            self.detector.clone(),
            lc,
            self.windows.clone(),
            KnowledgeBase::in_memory(),
            chain,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineReport {
    pub metrics: MetricsReport,
    pub train_lines: usize,
    pub test_lines: usize,
    /// First test window start, in milliseconds.
    pub boundary: i64,
    pub train_queries: u64,
    pub kb_entries: usize,
    pub stats: EngineStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineReport {
    /// One report per test chunk, chunks 1 through 5.
    pub chunks: Vec<MetricsReport>,
    pub f1: Vec<f64>,
    pub mean_f1: f64,
    pub wiped: bool,
    pub stats: EngineStats,
}

struct Prepared<'a> {
    ds: &'a LabeledDataset,
    times: Vec<i64>,
    epoch: i64,
    labels: Arc<[bool]>,
}

impl<'a> Prepared<'a> {
    fn new(ds: &'a LabeledDataset, setup: &EvalSetup) -> Self {
        let times = effective_times(
            ds.lines.iter().map(|l| l.timestamp),
            setup.windows.synthetic_rate,
            setup.windows.epoch,
        );
        let epoch = setup.windows.epoch.or_else(|| times.first().copied()).unwrap_or(0);
        Self {
            ds,
            times,
            epoch,
            labels: ds.labels(),
        }
    }

    fn truth(&self) -> Box<dyn Expert> {
        Box::new(GroundTruthExpert::new(Arc::clone(&self.labels)))
    }

    fn feed(&self, engine: &mut Engine, range: Range<usize>) -> Vec<Window> {
        let mut closed = Vec::new();
        for i in range {
            let l = &self.ds.lines[i];
            let raw = RawLine::new(i as u64, l.text.as_str()).at(self.times[i]);
            let meta = LineMeta {
                level: l.level.as_deref().map(str::to_string),
                component: l.component.as_deref().map(str::to_string),
                label: Some(l.label),
            };
            closed.extend(engine.ingest(raw, meta));
        }
        closed
    }
}

fn test_metrics<'w>(
    windows: impl IntoIterator<Item = &'w Window>,
    from: i64,
    until: i64,
) -> Result<MetricsReport, MetricsError> {
    compute_metrics(windows.into_iter().filter(|w| w.start >= from && w.start < until))
}

/// Trains on `train` with label feedback, then tests from the window
/// boundary at `test_from` to the end without feedback.
fn train_then_test(
    ds: &LabeledDataset,
    setup: &EvalSetup,
    train_end: usize,
    test_from: usize,
    test_chain: Vec<Box<dyn Expert>>,
) -> Result<OfflineReport, EvalError> {
    let started = Instant::now();
    let p = Prepared::new(ds, setup);
    let train = align_cut(&p.times, train_end, &setup.windows, p.epoch);
    let test = align_cut(&p.times, test_from, &setup.windows, p.epoch);
    let mut engine = setup.engine(vec![p.truth()])?;
    p.feed(&mut engine, 0..train.index);
    engine.advance_to(train.boundary);
    let train_queries = engine.stats().queries_issued;
    engine.set_chain(test_chain);
    let mut closed = p.feed(&mut engine, test.index..ds.len());
    closed.extend(engine.flush());
    let mut metrics = test_metrics(&closed, test.boundary, i64::MAX)?;
    metrics.queries_issued = engine.stats().queries_issued - train_queries;
    metrics.wall_time = started.elapsed();
    Ok(OfflineReport {
        metrics,
        train_lines: train.index,
        test_lines: ds.len() - test.index,
        boundary: test.boundary,
        train_queries,
        kb_entries: engine.experts().knowledge_base().len(),
        stats: engine.stats(),
    })
}

/// 80/20 chronological split. Test queries are counted but never answered.
pub fn run_offline(ds: &LabeledDataset, setup: &EvalSetup) -> Result<OfflineReport, EvalError> {
    let (train, _) = split_offline(ds.len());
    train_then_test(ds, setup, train.end, train.end, vec![Box::new(HumanQueue)])
}

/// Trains on the first half of the offline training split, then tests the
/// same test split with no experts at all.
pub fn run_floor(ds: &LabeledDataset, setup: &EvalSetup) -> Result<OfflineReport, EvalError> {
    let (train, _) = split_offline(ds.len());
    let (half, _) = split_at_fraction(train.end, 0.5);
    train_then_test(ds, setup, half.end, train.end, Vec::new())
}

/// Six chronological chunks. Chunk 0 trains; each later chunk is tested
/// and then its queries are answered from labels before the next chunk.
/// With `wipe`, all stored feedback is dropped before that answering step,
/// so each chunk sees only the previous chunk's answers.
pub fn run_online(ds: &LabeledDataset, setup: &EvalSetup, wipe: bool) -> Result<OnlineReport, EvalError> {
    let p = Prepared::new(ds, setup);
    let chunks = split_online(ds.len(), ONLINE_CHUNKS);
    let mut idx = vec![0usize];
    let mut bounds = vec![i64::MIN];
    for c in &chunks[1..] {
        let cut = align_cut(&p.times, c.start, &setup.windows, p.epoch);
        let prev = *idx.last().expect("non-empty");
        idx.push(cut.index.max(prev));
        bounds.push(cut.boundary.max(*bounds.last().expect("non-empty")));
    }
    idx.push(ds.len());
    bounds.push(i64::MAX);

    let mut engine = setup.engine(vec![p.truth()])?;
    p.feed(&mut engine, 0..idx[1]);
    engine.advance_to(bounds[1]);
    let mut reports = Vec::with_capacity(ONLINE_CHUNKS - 1);
    for i in 1..ONLINE_CHUNKS {
        let started = Instant::now();
        engine.set_chain(vec![Box::new(HumanQueue)]);
        let before = engine.stats().queries_issued;
        let mut closed = p.feed(&mut engine, idx[i]..idx[i + 1]);
        if i + 1 < ONLINE_CHUNKS {
            closed.extend(engine.advance_to(bounds[i + 1]));
        } else {
            closed.extend(engine.flush());
        }
        let mut m = test_metrics(&closed, bounds[i], bounds[i + 1])?;
        m.queries_issued = engine.stats().queries_issued - before;
        m.wall_time = started.elapsed();
        reports.push(m);
        if i + 1 < ONLINE_CHUNKS {
            if wipe {
                engine.wipe_feedback();
            }
            let mut truth = GroundTruthExpert::new(Arc::clone(&p.labels));
            engine.answer_pending(&mut truth);
        }
    }
    let f1: Vec<f64> = reports.iter().map(|m| m.f1).collect();
    let mean_f1 = if f1.is_empty() {
        0.0
    } else {
        f1.iter().sum::<f64>() / f1.len() as f64
    };
    Ok(OnlineReport {
        chunks: reports,
        f1,
        mean_f1,
        wiped: wipe,
        stats: engine.stats(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::synth::{generate_dataset, SynthConfig};

    fn corpus() -> LabeledDataset {
        // Evenly used normal templates and one anomalous template, so a
        // single rare cluster stands out against the rest.
        generate_dataset(&SynthConfig {
            lines: 30_000,
            templates: 10,
            anomaly_templates: 1,
            anomaly_bursts: 12,
            word_params: false,
            zipf_exponent: 0.0,
            drift_share: 0.0,
            seed: 11,
            ..SynthConfig::default()
        })
    }

    fn without_timing(mut r: OfflineReport) -> OfflineReport {
        r.metrics.wall_time = Duration::ZERO;
        r
    }

    #[test]
    fn offline_is_deterministic_and_conserves_counts() {
        let ds = corpus();
        let setup = EvalSetup::default();
        let a = run_offline(&ds, &setup).unwrap();
        let b = run_offline(&ds, &setup).unwrap();
        assert_eq!(without_timing(a.clone()), without_timing(b));
        assert_eq!(a.train_lines + a.test_lines, ds.len());
        assert_eq!(a.stats.processed, ds.len() as u64);
        assert!(a.metrics.windows_total > 0);
        assert!(a.kb_entries > 0);
    }

    #[test]
    fn offline_detects_injected_anomalies() {
        let ds = corpus();
        let r = run_offline(&ds, &EvalSetup::default()).unwrap();
        assert!(r.metrics.recall > 0.0, "{:?}", r.metrics);
    }

    #[test]
    fn floor_runs_without_queries() {
        let ds = corpus();
        let r = run_floor(&ds, &EvalSetup::default()).unwrap();
        assert_eq!(r.metrics.queries_issued, 0);
        assert!(r.train_lines < ds.len() * 4 / 10 + 1);
    }

    #[test]
    fn online_emits_five_scores() {
        let ds = corpus();
        let kept = run_online(&ds, &EvalSetup::default(), false).unwrap();
        let wiped = run_online(&ds, &EvalSetup::default(), true).unwrap();
        assert_eq!(kept.f1.len(), 5);
        assert_eq!(wiped.f1.len(), 5);
        assert!(kept.chunks.iter().all(|m| m.windows_total > 0));
        // The first test chunk sees identical history in both variants.
        assert_eq!(kept.f1[0], wiped.f1[0]);
    }

    #[test]
    fn empty_dataset_gives_empty_reports() {
        let ds = LabeledDataset::default();
        let r = run_offline(&ds, &EvalSetup::default()).unwrap();
        assert_eq!(r.metrics.windows_total, 0);
        let o = run_online(&ds, &EvalSetup::default(), false).unwrap();
        assert_eq!(o.f1, vec![0.0; 5]);
    }
}
