//! Time windows over the record stream.
//!
//! Window `k` covers `[epoch + k * step, epoch + k * step + span)`. Fixed
//! windows use `step == span`. The epoch defaults to the first timestamp
//! seen. Windows close once a record at or past their end arrives, always in
//! start order. Records older than the end of the newest closed window are
//! late: they are counted and scored but belong to no window.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trie::ClusterId;

#[derive(Debug, Error, PartialEq)]
#[error("invalid window config: {0}")]
pub struct WindowConfigError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    Fixed,
    Sliding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawWindowConfig", into = "RawWindowConfig")]
pub struct WindowConfig {
    pub mode: WindowMode,
    pub span: Duration,
    /// Equal to `span` in fixed mode.
    pub step: Duration,
    /// Lines per second used to time records that carry no timestamp.
    pub synthetic_rate: f64,
    /// Milliseconds since the Unix epoch; the first timestamp when unset.
    pub epoch: Option<i64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWindowConfig {
    #[serde(default = "default_mode")]
    mode: WindowMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    span: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step: Option<String>,
    #[serde(default = "default_rate")]
    synthetic_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    epoch: Option<i64>,
}

fn default_mode() -> WindowMode {
    WindowMode::Fixed
}

fn default_rate() -> f64 {
    1.0
}

impl From<RawWindowConfig> for WindowConfig {
    fn from(r: RawWindowConfig) -> Self {
        // Unparseable durations become zero and fail validation.
        let parse = |s: &str| humantime::parse_duration(s).unwrap_or(Duration::ZERO);
        let mut cfg = match r.mode {
            WindowMode::Fixed => Self::fixed(r.span.as_deref().map_or(Duration::from_secs(3600), parse)),
            WindowMode::Sliding => Self::sliding(
                r.span.as_deref().map_or(Duration::from_secs(600), parse),
                r.step.as_deref().map_or(Duration::from_secs(120), parse),
            ),
        };
        cfg.synthetic_rate = r.synthetic_rate;
        cfg.epoch = r.epoch;
        cfg
    }
}

impl From<WindowConfig> for RawWindowConfig {
    fn from(c: WindowConfig) -> Self {
        let fmt = |d: Duration| humantime::format_duration(d).to_string();
        Self {
            mode: c.mode,
            span: Some(fmt(c.span)),
            step: (c.mode == WindowMode::Sliding).then(|| fmt(c.step)),
            synthetic_rate: c.synthetic_rate,
            epoch: c.epoch,
        }
    }
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self::fixed(Duration::from_secs(3600))
    }
}

impl WindowConfig {
    pub fn fixed(span: Duration) -> Self {
        Self {
            mode: WindowMode::Fixed,
            span,
            step: span,
            synthetic_rate: default_rate(),
            epoch: None,
        }
    }

    pub fn sliding(span: Duration, step: Duration) -> Self {
        Self {
            mode: WindowMode::Sliding,
            span,
            step,
            synthetic_rate: default_rate(),
            epoch: None,
        }
    }

    pub fn validate(&self) -> Result<(), WindowConfigError> {
        if self.span_ms() <= 0 || self.step_ms() <= 0 {
            return Err(WindowConfigError("span and step must be at least 1ms".into()));
        }
        if self.step > self.span {
            return Err(WindowConfigError("step must not exceed span".into()));
        }
        if self.mode == WindowMode::Fixed && self.step != self.span {
            return Err(WindowConfigError("fixed windows need step == span".into()));
        }
        if !(self.synthetic_rate.is_finite() && self.synthetic_rate > 0.0) {
            return Err(WindowConfigError("synthetic_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn span_ms(&self) -> i64 {
        i64::try_from(self.span.as_millis()).unwrap_or(i64::MAX)
    }

    pub fn step_ms(&self) -> i64 {
        i64::try_from(self.step.as_millis()).unwrap_or(i64::MAX)
    }

    /// Most windows one record can fall into.
    pub fn max_overlap(&self) -> u64 {
        (self.span_ms() as u64).div_ceil(self.step_ms() as u64)
    }

    /// Ids of the windows containing `t`.
    pub fn assign(&self, epoch: i64, t: i64) -> RangeInclusive<u64> {
        let (span, step) = (self.span_ms(), self.step_ms());
        let off = t - epoch;
        if off < 0 {
            #[allow(clippy::reversed_empty_ranges)]
            return 1..=0;
        }
        let last = off.div_euclid(step);
        // First k with k * step + span > off.
        let first = (off - span).div_euclid(step) + 1;
        first.max(0) as u64..=last as u64
    }

    pub fn bounds(&self, epoch: i64, id: u64) -> (i64, i64) {
        let start = epoch + id as i64 * self.step_ms();
        (start, start + self.span_ms())
    }
}

/// One time window and, once closed, its verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub window_id: u64,
    pub start: i64,
    pub end: i64,
    pub member_line_nos: Vec<u64>,
    /// Cluster of each member, parallel to `member_line_nos`.
    #[serde(skip)]
    pub member_clusters: Vec<ClusterId>,
    /// Whether any member is labeled anomalous; `None` when no member has a label.
    pub label: Option<bool>,
    pub predicted: Option<bool>,
    pub max_p: f64,
    /// Fused score of each distinct member cluster at close.
    #[serde(default)]
    pub scores: Vec<ClusterScore>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterScore {
    pub cluster_id: ClusterId,
    pub p: f64,
}

impl Window {
    pub fn new(window_id: u64, start: i64, end: i64) -> Self {
        Self {
            window_id,
            start,
            end,
            member_line_nos: Vec::new(),
            member_clusters: Vec::new(),
            label: None,
            predicted: None,
            max_p: 0.0,
            scores: Vec::new(),
        }
    }

    pub fn push(&mut self, line_no: u64, cluster: ClusterId, label: Option<bool>) {
        self.member_line_nos.push(line_no);
        self.member_clusters.push(cluster);
        if let Some(l) = label {
            self.label = Some(self.label.unwrap_or(false) | l);
        }
    }

    pub fn len(&self) -> usize {
        self.member_line_nos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_line_nos.is_empty()
    }
}

/// Sets the verdict from the members' fused scores.
pub fn close_window(w: &mut Window, member_p: impl IntoIterator<Item = f64>, alarm_threshold: f64) {
    let max_p = member_p.into_iter().fold(0.0f64, f64::max);
    w.max_p = max_p;
    w.predicted = Some(max_p >= alarm_threshold);
}

/// Outcome of adding one record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Placement {
    Windows(RangeInclusive<u64>),
    Late,
}

/// Tracks open windows for a stream.
#[derive(Debug, Clone)]
pub struct Windower {
    cfg: WindowConfig,
    epoch: Option<i64>,
    open: BTreeMap<u64, Window>,
    /// End of the newest closed window.
    watermark: Option<i64>,
    late: u64,
    last_t: Option<i64>,
    synthetic: u64,
}

impl Windower {
    pub fn new(cfg: WindowConfig) -> Result<Self, WindowConfigError> {
        cfg.validate()?;
        Ok(Self {
            epoch: cfg.epoch,
            cfg,
            open: BTreeMap::new(),
            watermark: None,
            late: 0,
            last_t: None,
            synthetic: 0,
        })
    }

    pub fn config(&self) -> &WindowConfig {
        &self.cfg
    }

    pub fn epoch(&self) -> Option<i64> {
        self.epoch
    }

    pub fn late(&self) -> u64 {
        self.late
    }

    pub fn open_windows(&self) -> usize {
        self.open.len()
    }

    /// The record's own timestamp, or one spaced from the previous record by
    /// the synthetic rate.
    pub fn timestamp_for(&mut self, ts: Option<i64>) -> i64 {
        let t = match ts {
            Some(t) => t,
            None => {
                let gap = (1000.0 / self.cfg.synthetic_rate).round().max(1.0) as i64;
                self.synthetic += 1;
                match self.last_t {
                    Some(prev) => prev + gap,
                    None => self.cfg.epoch.unwrap_or(0),
                }
            }
        };
        self.last_t = Some(self.last_t.map_or(t, |p| p.max(t)));
        t
    }

    /// Closes every open window ending at or before `t`, oldest first.
    pub fn advance(&mut self, t: i64) -> Vec<Window> {
        let mut out = Vec::new();
        while let Some(entry) = self.open.first_entry() {
            if entry.get().end > t {
                break;
            }
            let w = entry.remove();
            self.watermark = Some(self.watermark.map_or(w.end, |m| m.max(w.end)));
            out.push(w);
        }
        out
    }

    /// Adds a record at time `t`. Call [`Windower::advance`] first.
    pub fn add(&mut self, t: i64, line_no: u64, cluster: ClusterId, label: Option<bool>) -> Placement {
        let epoch = *self.epoch.get_or_insert(t);
        if self.watermark.is_some_and(|m| t < m) || t < epoch {
            self.late += 1;
            return Placement::Late;
        }
        let ids = self.cfg.assign(epoch, t);
        for id in ids.clone() {
            let (start, end) = self.cfg.bounds(epoch, id);
            self.open
                .entry(id)
                .or_insert_with(|| Window::new(id, start, end))
                .push(line_no, cluster, label);
        }
        Placement::Windows(ids)
    }

    /// Closes everything still open.
    pub fn flush(&mut self) -> Vec<Window> {
        self.advance(i64::MAX)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MIN: i64 = 60_000;

    fn sliding() -> WindowConfig {
        WindowConfig::sliding(Duration::from_secs(600), Duration::from_secs(120))
    }

    #[test]
    fn fixed_assignment_is_floor_division() {
        let cfg = WindowConfig::default();
        assert_eq!(cfg.assign(0, 90 * MIN), 1..=1);
        assert_eq!(cfg.assign(0, 0), 0..=0);
        assert_eq!(cfg.assign(0, 60 * MIN), 1..=1);
        assert!(cfg.assign(10, 0).is_empty());
    }

    #[test]
    fn sliding_assignment_enumerates_containing_windows() {
        let cfg = sliding();
        let starts: Vec<i64> = cfg.assign(0, 9 * MIN).map(|k| cfg.bounds(0, k).0 / MIN).collect();
        assert_eq!(starts, vec![0, 2, 4, 6, 8]);
        // t = 10 min is the end of window 0, so only windows 1..=5 hold it.
        let ids: Vec<u64> = cfg.assign(0, 10 * MIN).collect();
        assert_eq!(ids, vec![1, 2, 3, 4, 5]);
    }

    /// Containing windows found by scanning every candidate start.
    fn brute_force(cfg: &WindowConfig, epoch: i64, t: i64) -> Vec<u64> {
        (0..=((t - epoch).max(0) / cfg.step_ms()) as u64 + 1)
            .filter(|&k| {
                let (s, e) = cfg.bounds(epoch, k);
                s <= t && t < e
            })
            .collect()
    }

    proptest! {
        #[test]
        fn assignment_matches_scan(
            span in 1i64..50, step_frac in 1i64..50, epoch in -100i64..100, off in 0i64..500
        ) {
            let step = step_frac.min(span);
            let cfg = WindowConfig::sliding(Duration::from_millis(span as u64), Duration::from_millis(step as u64));
            let t = epoch + off;
            let got: Vec<u64> = cfg.assign(epoch, t).collect();
            prop_assert_eq!(&got, &brute_force(&cfg, epoch, t));
            prop_assert!(!got.is_empty());
            prop_assert!(got.len() as u64 <= cfg.max_overlap());
        }

        #[test]
        fn fixed_partition(span in 1i64..50, offs in proptest::collection::vec(0i64..1000, 1..50)) {
            let cfg = WindowConfig::fixed(Duration::from_millis(span as u64));
            for off in offs {
                prop_assert_eq!(cfg.assign(0, off).count(), 1);
            }
        }

        #[test]
        fn windows_close_in_start_order(mut ts in proptest::collection::vec(0i64..10_000, 1..100)) {
            ts.sort();
            let cfg = WindowConfig::sliding(Duration::from_millis(500), Duration::from_millis(200));
            let mut w = Windower::new(cfg).unwrap();
            let mut closed = Vec::new();
            for (i, t) in ts.iter().enumerate() {
                closed.extend(w.advance(*t));
                prop_assert!(matches!(w.add(*t, i as u64, 0, None), Placement::Windows(_)));
            }
            closed.extend(w.flush());
            prop_assert!(closed.windows(2).all(|p| p[0].start < p[1].start));
            for win in &closed {
                for &ln in &win.member_line_nos {
                    let t = ts[ln as usize];
                    prop_assert!(win.start <= t && t < win.end);
                }
            }
        }
    }

    #[test]
    fn close_window_examples() {
        let mut w = Window::new(0, 0, 1);
        close_window(&mut w, [0.0, 0.0], 0.5);
        assert_eq!((w.predicted, w.max_p), (Some(false), 0.0));
        close_window(&mut w, [0.1, 0.9], 0.5);
        assert_eq!((w.predicted, w.max_p), (Some(true), 0.9));
        close_window(&mut w, [], 0.5);
        assert_eq!((w.predicted, w.max_p), (Some(false), 0.0));
    }

    #[test]
    fn late_records_are_excluded() {
        let mut w = Windower::new(WindowConfig::fixed(Duration::from_secs(60))).unwrap();
        w.add(0, 0, 1, Some(false));
        let closed = w.advance(61_000);
        assert_eq!(closed.len(), 1);
        w.add(61_000, 1, 1, Some(true));
        assert_eq!(w.add(59_000, 2, 1, Some(true)), Placement::Late);
        assert_eq!(w.late(), 1);
        let rest = w.flush();
        assert_eq!(rest[0].member_line_nos, vec![1]);
        assert_eq!(rest[0].label, Some(true));
        assert_eq!(closed[0].label, Some(false));
    }

    #[test]
    fn epoch_is_first_timestamp() {
        let mut w = Windower::new(WindowConfig::fixed(Duration::from_secs(3600))).unwrap();
        w.add(1_000_000, 0, 0, None);
        assert_eq!(w.epoch(), Some(1_000_000));
        let win = w.flush().remove(0);
        assert_eq!((win.start, win.end), (1_000_000, 1_000_000 + 3_600_000));
        assert_eq!(win.label, None);
    }

    #[test]
    fn synthetic_timestamps_follow_rate() {
        let mut cfg = WindowConfig::default();
        cfg.synthetic_rate = 4.0;
        let mut w = Windower::new(cfg).unwrap();
        assert_eq!(w.timestamp_for(None), 0);
        assert_eq!(w.timestamp_for(None), 250);
        assert_eq!(w.timestamp_for(Some(10_000)), 10_000);
        assert_eq!(w.timestamp_for(None), 10_250);
    }

    #[test]
    fn config_validation_and_toml() {
        assert!(WindowConfig::sliding(Duration::from_secs(60), Duration::from_secs(120))
            .validate()
            .is_err());
        let c: WindowConfig = toml::from_str("mode = \"sliding\"").unwrap();
        assert_eq!(c, sliding());
        let c: WindowConfig = toml::from_str("span = \"30m\"").unwrap();
        assert_eq!(c, WindowConfig::fixed(Duration::from_secs(1800)));
        let c: WindowConfig = toml::from_str("span = \"soon\"").unwrap();
        assert!(c.validate().is_err());
        let back: WindowConfig = toml::from_str(&toml::to_string(&sliding()).unwrap()).unwrap();
        assert_eq!(back, sliding());
    }
}
