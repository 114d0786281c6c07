//! Request and response bodies.

use serde::{Deserialize, Serialize};
use trielog_core::engine::{EngineStats, LineMeta, TemplateInfo};
use trielog_core::expert::{Provenance, Verdict};
use trielog_core::trie::{ClusterId, Decision};
use trielog_core::windows::{ClusterScore, Window};

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
pub struct IngestRequest {
    pub lines: Vec<IngestLine>,
}

/// A bare string or a record with optional metadata.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum IngestLine {
    Text(String),
    Record {
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timestamp: Option<Timestamp>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        level: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        component: Option<String>,
    },
}

/// Epoch milliseconds or an RFC 3339 string.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Timestamp {
    Millis(i64),
    Text(String),
}

impl Timestamp {
    pub fn millis(&self) -> Result<i64, String> {
        match self {
            Self::Millis(ms) => Ok(*ms),
            Self::Text(s) => {
                let t = humantime::parse_rfc3339_weak(s).map_err(|e| format!("timestamp {s:?}: {e}"))?;
                let d = t
                    .duration_since(std::time::UNIX_EPOCH)
                    .map_err(|_| format!("timestamp {s:?} is before 1970"))?;
                i64::try_from(d.as_millis()).map_err(|_| format!("timestamp {s:?} out of range"))
            }
        }
    }
}

/// A line ready for the stream owner.
#[derive(Debug, Clone, PartialEq)]
pub struct LineIn {
    pub text: String,
    pub timestamp: Option<i64>,
    pub meta: LineMeta,
}

impl IngestLine {
    pub fn into_line(self) -> Result<LineIn, String> {
        match self {
            Self::Text(text) => Ok(LineIn { text, timestamp: None, meta: LineMeta::default() }),
            Self::Record { text, timestamp, level, component } => Ok(LineIn {
                text,
                timestamp: timestamp.as_ref().map(Timestamp::millis).transpose()?,
                meta: LineMeta { level, component, label: None },
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
pub struct IngestResponse {
    pub accepted: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize, Serialize)]
pub struct QueriesParams {
    pub state: Option<String>,
    pub offset: Option<usize>,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
pub struct FeedbackRequest {
    pub query_id: u64,
    pub decision: DecisionInput,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

/// `0`/`1` or `"normal"`/`"anomaly"`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum DecisionInput {
    Bit(u8),
    Name(Decision),
}

impl DecisionInput {
    pub fn decision(self) -> Option<Decision> {
        match self {
            Self::Bit(b) => Decision::from_bit(b),
            Self::Name(d) => Some(d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
pub struct FeedbackResponse {
    pub query_id: u64,
    pub cluster_id: ClusterId,
    pub tp: f64,
    pub p: f64,
    pub anomalous: bool,
    pub provenance: Provenance,
}

impl FeedbackResponse {
    pub fn new(query_id: u64, v: Verdict) -> Self {
        Self {
            query_id,
            cluster_id: v.cluster_id,
            tp: v.tp,
            p: v.p,
            anomalous: v.anomalous,
            provenance: v.provenance,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, Serialize)]
pub struct VerdictsParams {
    pub since: Option<u64>,
}

/// A closed window as served by `/v1/verdicts`. Ids start at 1.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
pub struct VerdictEvent {
    pub window_id: u64,
    pub start: i64,
    pub end: i64,
    pub lines: usize,
    pub predicted: Option<bool>,
    pub max_p: f64,
    pub scores: Vec<ClusterScore>,
    /// Set once expert feedback changed a score after close.
    pub revised: bool,
}

impl VerdictEvent {
    pub fn from_window(w: &Window, lines: usize, revised: bool) -> Self {
        Self {
            window_id: w.window_id + 1,
            start: w.start,
            end: w.end,
            lines,
            predicted: w.predicted,
            max_p: w.max_p,
            scores: w.scores.clone(),
            revised,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
pub struct TemplatesResponse {
    pub processed: u64,
    pub templates: Vec<TemplateInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize, Serialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
pub struct StatsResponse {
    #[serde(flatten)]
    pub stats: EngineStats,
    pub pending: usize,
}
