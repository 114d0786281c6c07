//! Throughput and memory measurement over preloaded input.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::dataset::{load_dataset, DatasetError, DatasetFormat};
use super::metrics::{compute_metrics, MetricsReport};
use super::protocol::{EvalError, EvalSetup};
use crate::engine::{EngineStats, LineMeta};
use crate::preprocess::RawLine;

/// Sampling period of the memory observer.
pub const SAMPLE_PERIOD: Duration = Duration::from_millis(50);

/// Resident set size of this process in bytes, where the platform reports it.
pub fn current_rss() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmRSS:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse::<u64>().ok())
        .map(|kb| kb * 1024)
}

/// Samples RSS on a background thread and keeps the maximum.
pub struct RssSampler {
    stop: Arc<AtomicBool>,
    peak: Arc<AtomicU64>,
    handle: Option<JoinHandle<()>>,
}

impl RssSampler {
    pub fn start(period: Duration) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let peak = Arc::new(AtomicU64::new(current_rss().unwrap_or(0)));
        let handle = {
            let (stop, peak) = (Arc::clone(&stop), Arc::clone(&peak));
            std::thread::Builder::new()
                .name("rss-sampler".into())
                .spawn(move || {
                    while !stop.load(Ordering::Relaxed) {
                        if let Some(r) = current_rss() {
                            peak.fetch_max(r, Ordering::Relaxed);
                        }
                        std::thread::sleep(period);
                    }
                })
                .ok()
        };
        Self { stop, peak, handle }
    }

    /// Stops sampling and returns the peak, or `None` without `/proc`.
    pub fn finish(mut self) -> Option<u64> {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
        let last = current_rss()?;
        Some(self.peak.load(Ordering::Relaxed).max(last))
    }
}

impl Drop for RssSampler {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub metrics: MetricsReport,
    pub lines: u64,
    pub lines_per_sec: f64,
    /// RSS after the input was loaded and before the engine was built.
    pub baseline_rss: Option<u64>,
    /// Peak minus baseline.
    pub engine_memory: Option<u64>,
    pub detector_entries: usize,
    pub stats: EngineStats,
}

/// Runs the whole pipeline over `text`, which is already in memory, with no
/// experts. Line parsing is timed; reading the input is not.
pub fn run_bench(text: &str, format: DatasetFormat, setup: &EvalSetup) -> Result<BenchReport, BenchError> {
    let baseline = current_rss();
    let sampler = RssSampler::start(SAMPLE_PERIOD);
    let started = Instant::now();
    let mut engine = setup.engine(Vec::new()).map_err(EvalError::from)?;
    let mut windows = Vec::new();
    let mut lines = 0u64;
    // Parse in blocks so memory for parsed lines stays bounded.
    let mut rest = text;
    while !rest.is_empty() {
        let cut = nth_newline(rest, 8192);
        let (block, tail) = rest.split_at(cut);
        rest = tail;
        let ds = load_dataset(block.as_bytes(), format, "bench", None)?;
        for l in ds.lines {
            let mut raw = RawLine::new(lines, l.text);
            raw.timestamp = l.timestamp;
            let meta = LineMeta {
                level: l.level.as_deref().map(str::to_string),
                component: l.component.as_deref().map(str::to_string),
                label: Some(l.label),
            };
            lines += 1;
            for mut w in engine.ingest(raw, meta) {
                w.member_line_nos = Vec::new();
                windows.push(w);
            }
        }
    }
    windows.extend(engine.flush());
    let wall = started.elapsed();
    let peak = sampler.finish();
    let mut metrics = compute_metrics(&windows).map_err(EvalError::from)?;
    metrics.wall_time = wall;
    metrics.peak_memory = peak;
    metrics.queries_issued = engine.stats().queries_issued;
    let secs = wall.as_secs_f64();
    Ok(BenchReport {
        lines_per_sec: if secs > 0.0 { lines as f64 / secs } else { 0.0 },
        lines,
        baseline_rss: baseline,
        engine_memory: peak.zip(baseline).map(|(p, b)| p.saturating_sub(b)),
        detector_entries: engine.detector().state_entries(),
        stats: engine.stats(),
        metrics,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Byte offset just past the `n`th newline, or the end of `s`.
fn nth_newline(s: &str, n: usize) -> usize {
    s.bytes()
        .enumerate()
        .filter(|&(_, b)| b == b'\n')
        .nth(n.saturating_sub(1))
        .map_or(s.len(), |(i, _)| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::synth::{generate_bgl_text, SynthConfig};

    #[test]
    fn empty_input_reports() {
        let r = run_bench("", DatasetFormat::Bgl, &EvalSetup::default()).unwrap();
        assert_eq!(r.lines, 0);
        assert_eq!(r.metrics.windows_total, 0);
        assert!(r.metrics.wall_time < Duration::from_secs(1));
    }

    #[test]
    fn counts_every_line() {
        let text = generate_bgl_text(&SynthConfig {
            lines: 20_000,
            templates: 30,
            ..SynthConfig::default()
        });
        let r = run_bench(&text, DatasetFormat::Bgl, &EvalSetup::default()).unwrap();
        assert_eq!(r.lines, 20_000);
        assert_eq!(r.stats.processed, 20_000);
        let sum: u64 = r.stats.clusters as u64;
        assert!(sum >= 30, "{sum}");
        assert_eq!(r.metrics.queries_issued, 0);
        if cfg!(target_os = "linux") {
            assert!(r.metrics.peak_memory.is_some());
        }
    }

    #[test]
    fn newline_offsets() {
        assert_eq!(nth_newline("a\nb\nc", 1), 2);
        assert_eq!(nth_newline("a\nb\nc", 2), 4);
        assert_eq!(nth_newline("a\nb\nc", 5), 5);
    }
}
