use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::windows::Window;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("window {0} has no label")]
    MissingLabel(u64),
    #[error("window {0} has no prediction")]
    MissingPrediction(u64),
}

/// Window-level confusion counts and derived scores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub windows_total: u64,
    pub queries_issued: u64,
    #[serde(with = "secs")]
    pub wall_time: Duration,
    pub peak_memory: Option<u64>,
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?.max(0.0)))
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    /// Derives precision, recall and F1 from counts. Zero denominators give 0.
    pub fn from_counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            tn,
            fn_,
            precision,
            recall,
            f1,
            windows_total: tp + fp + tn + fn_,
            ..Self::default()
        }
    }

    /// A fixed-width table for terminals.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, k: &str, v: String| s.push_str(&format!("{k:<16}{v:>14}\n"));
        row(&mut s, "windows", self.windows_total.to_string());
        row(&mut s, "TP", self.tp.to_string());
        row(&mut s, "FP", self.fp.to_string());
        row(&mut s, "TN", self.tn.to_string());
        row(&mut s, "FN", self.fn_.to_string());
        row(&mut s, "precision", format!("{:.4}", self.precision));
        row(&mut s, "recall", format!("{:.4}", self.recall));
        row(&mut s, "F1", format!("{:.4}", self.f1));
        row(&mut s, "queries", self.queries_issued.to_string());
        row(&mut s, "wall time (s)", format!("{:.3}", self.wall_time.as_secs_f64()));
        if let Some(m) = self.peak_memory {
            row(&mut s, "peak memory (MB)", format!("{:.1}", m as f64 / 1e6));
        }
        s
    }
}

pub fn compute_metrics<'a>(
    windows: impl IntoIterator<Item = &'a Window>,
) -> Result<MetricsReport, MetricsError> {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for w in windows {
        let label = w.label.ok_or(MetricsError::MissingLabel(w.window_id))?;
        let pred = w.predicted.ok_or(MetricsError::MissingPrediction(w.window_id))?;
        match (label, pred) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
            (true, false) => fn_ += 1,
        }
    }
    Ok(MetricsReport::from_counts(tp, fp, tn, fn_))
}
