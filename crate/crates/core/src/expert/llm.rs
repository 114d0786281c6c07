//! A language model as an expert.
//!
//! Wire format: the request body is JSON `{"prompt", "template", "samples"}`.
//! The response is either JSON with a `text` field, JSON with `decision`,
//! `confidence` and `reason` fields, or plain text. Text answers look like
//! `yes; confidence 0.85; reason: null pointer`.

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Consult, Expert, ExpertFeedback, ExpertQuery, FeedbackSource};
use crate::trie::Decision;

/// Prompt shipped with the crate.
pub const SHIPPED_PROMPT: &str = include_str!("../../data/llm_prompt_v1.txt");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("http status {0}")]
    Status(u16),
    #[error("transport: {0}")]
    Other(String),
    #[error("no fixture for template {0:?}")]
    NoFixture(String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        match self {
            Self::Timeout | Self::Other(_) => true,
            Self::Status(s) => *s == 429 || *s >= 500,
            Self::NoFixture(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub prompt: String,
    pub template: String,
    pub samples: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub decision: Option<serde_json::Value>,
    #[serde(default)]
    pub confidence: Option<f64>,
    #[serde(default)]
    pub reason: Option<String>,
}

pub trait Transport: Send {
    /// Returns the raw response body.
    fn send(&mut self, req: &LlmRequest) -> Result<String, TransportError>;
}

/// Posts requests to an HTTP endpoint.
#[derive(Debug)]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    token: Option<String>,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, token: Option<String>, timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Other(e.to_string()))?;
        Ok(Self {
            client,
            url: url.into(),
            token,
        })
    }

    /// Reads the bearer token from the named environment variable, if set.
    pub fn from_env(url: impl Into<String>, token_var: &str, timeout: Duration) -> Result<Self, TransportError> {
        Self::new(url, std::env::var(token_var).ok(), timeout)
    }
}

impl Transport for HttpTransport {
    fn send(&mut self, req: &LlmRequest) -> Result<String, TransportError> {
        let mut builder = self.client.post(&self.url).json(req);
        if let Some(t) = &self.token {
            builder = builder.bearer_auth(t);
        }
        let resp = builder.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Other(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(TransportError::Status(status.as_u16()));
        }
        resp.text().map_err(|e| TransportError::Other(e.to_string()))
    }
}

#[derive(Deserialize)]
struct FixtureLine {
    template: String,
    response: String,
}

/// Replays recorded responses keyed by template text.
#[derive(Debug, Clone, Default)]
pub struct FixtureTransport {
    responses: HashMap<String, String>,
}

impl FixtureTransport {
    pub fn new(responses: HashMap<String, String>) -> Self {
        Self { responses }
    }

    /// Reads newline-delimited `{"template", "response"}` objects.
    pub fn from_ndjson(text: &str) -> Result<Self, serde_json::Error> {
        let mut responses = HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let f: FixtureLine = serde_json::from_str(line)?;
            responses.insert(f.template, f.response);
        }
        Ok(Self { responses })
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_ndjson(&text).map_err(std::io::Error::other)
    }
}

impl Transport for FixtureTransport {
    fn send(&mut self, req: &LlmRequest) -> Result<String, TransportError> {
        self.responses
            .get(&req.template)
            .cloned()
            .ok_or_else(|| TransportError::NoFixture(req.template.clone()))
    }
}

/// A prompt with `{template}` and `{samples}` slots. Lines starting with
/// `#` are comments.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    body: String,
}

impl PromptTemplate {
    pub fn new(text: &str) -> Self {
        let body = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n");
        Self { body }
    }

    pub fn shipped() -> Self {
        Self::new(SHIPPED_PROMPT)
    }

    pub fn render(&self, template: &str, samples: &[String]) -> String {
        let samples = if samples.is_empty() {
            "(none)".to_string()
        } else {
            samples
                .iter()
                .map(|s| format!("- {s}"))
                .collect::<Vec<_>>()
                .join("\n")
        };
        self.body
            .replace("{template}", template)
            .replace("{samples}", &samples)
    }
}

fn text_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?is)^\W*(yes|no)\b.*?\bconfidence\b\W*?([01](?:\.\d+)?|\.\d+)\b(?:.*?\breasons?\b\s*[:=-]?\s*(.*?))?\s*$",
        )
        .expect("valid")
    })
}

/// Parses an answer into (decision, confidence, rationale). Anything that
/// lacks a yes/no answer or a confidence in [0, 1] gives `None`.
pub fn parse_llm_response(body: &str) -> Option<(Decision, f64, Option<String>)> {
    if let Ok(resp) = serde_json::from_str::<LlmResponse>(body) {
        if let Some(text) = resp.text {
            return parse_text(&text);
        }
        let decision = match resp.decision? {
            serde_json::Value::Bool(b) => b,
            serde_json::Value::Number(n) => match n.as_u64()? {
                0 => false,
                1 => true,
                _ => return None,
            },
            serde_json::Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
                "yes" | "1" | "anomaly" => true,
                "no" | "0" | "normal" => false,
                _ => return None,
            },
            _ => return None,
        };
        let c = resp.confidence?;
        if !(0.0..=1.0).contains(&c) {
            return None;
        }
        let d = if decision { Decision::Anomaly } else { Decision::Normal };
        return Some((d, c, resp.reason.filter(|r| !r.trim().is_empty())));
    }
    parse_text(body)
}

fn parse_text(text: &str) -> Option<(Decision, f64, Option<String>)> {
    let caps = text_pattern().captures(text.trim())?;
    let decision = if caps[1].eq_ignore_ascii_case("yes") {
        Decision::Anomaly
    } else {
        Decision::Normal
    };
    let confidence: f64 = caps[2].parse().ok()?;
    if !(0.0..=1.0).contains(&confidence) {
        return None;
    }
    let reason = caps
        .get(3)
        .map(|m| m.as_str().trim().to_string())
        .filter(|r| !r.is_empty());
    Some((decision, confidence, reason))
}

type Sleeper = Box<dyn FnMut(Duration) + Send>;

/// Asks a model through a [`Transport`], retrying transient failures.
pub struct LlmExpert {
    transport: Box<dyn Transport>,
    prompt: PromptTemplate,
    max_attempts: u32,
    backoff: Duration,
    sleeper: Sleeper,
}

impl std::fmt::Debug for LlmExpert {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmExpert")
            .field("max_attempts", &self.max_attempts)
            .field("backoff", &self.backoff)
            .finish_non_exhaustive()
    }
}

impl LlmExpert {
    /// Three attempts, with waits of `backoff` then twice that.
    pub fn new(transport: Box<dyn Transport>, prompt: PromptTemplate, backoff: Duration) -> Self {
        Self {
            transport,
            prompt,
            max_attempts: 3,
            backoff,
            sleeper: Box::new(std::thread::sleep),
        }
    }

    pub fn with_sleeper(mut self, sleeper: impl FnMut(Duration) + Send + 'static) -> Self {
        self.sleeper = Box::new(sleeper);
        self
    }

    pub fn ask(&mut self, query: &ExpertQuery) -> Option<ExpertFeedback> {
        let samples: Vec<String> = query.sample_lines.iter().map(|s| s.text.clone()).collect();
        let req = LlmRequest {
            prompt: self.prompt.render(&query.rendered, &samples),
            template: query.template_text.clone(),
            samples,
        };
        let mut wait = self.backoff;
        for attempt in 1..=self.max_attempts {
            match self.transport.send(&req) {
                Ok(body) => {
                    let Some((decision, confidence, reason)) = parse_llm_response(&body) else {
                        tracing::debug!(query = query.query_id, "unparseable model answer");
                        return None;
                    };
                    return Some(ExpertFeedback {
                        decision,
                        confidence,
                        source: FeedbackSource::Llm,
                        rationale: reason,
                    });
                }
                Err(e) if e.retryable() && attempt < self.max_attempts => {
                    tracing::debug!(query = query.query_id, attempt, error = %e, "retrying model request");
                    (self.sleeper)(wait);
                    wait *= 2;
                }
                Err(e) => {
                    tracing::warn!(query = query.query_id, error = %e, "model request failed");
                    return None;
                }
            }
        }
        None
    }
}

impl Expert for LlmExpert {
    fn name(&self) -> &str {
        "llm"
    }

    fn consult(&mut self, query: &ExpertQuery) -> Consult {
        match self.ask(query) {
            Some(fb) => Consult::Answer(fb),
            None => Consult::Abstain,
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::{Arc, Mutex};

    use super::*;
    use crate::trie::SampleLine;

    fn query(template: &str) -> ExpertQuery {
        ExpertQuery {
            query_id: 7,
            cluster_id: 1,
            template_text: template.into(),
            rendered: template.into(),
            tp: 0.9,
            sample_lines: vec![SampleLine {
                line_no: 3,
                text: "raw line 3".into(),
            }],
            issued_at: 0,
        }
    }

    #[test]
    fn parses_text_answers() {
        assert_eq!(
            parse_llm_response("yes; confidence 0.85; reason: null pointer"),
            Some((Decision::Anomaly, 0.85, Some("null pointer".into())))
        );
        assert_eq!(
            parse_llm_response("No. Confidence: 0.6"),
            Some((Decision::Normal, 0.6, None))
        );
        assert_eq!(
            parse_llm_response("{\"text\": \"YES; confidence 1; reasons: kernel panic\"}"),
            Some((Decision::Anomaly, 1.0, Some("kernel panic".into())))
        );
    }

    #[test]
    fn parses_structured_answers() {
        assert_eq!(
            parse_llm_response(r#"{"decision": "no", "confidence": 0.7, "reason": "routine"}"#),
            Some((Decision::Normal, 0.7, Some("routine".into())))
        );
        assert_eq!(
            parse_llm_response(r#"{"decision": 1, "confidence": 0.9}"#),
            Some((Decision::Anomaly, 0.9, None))
        );
        assert_eq!(parse_llm_response(r#"{"decision": 1, "confidence": 1.9}"#), None);
    }

    #[test]
    fn rejects_gibberish() {
        for s in ["", "banana", "maybe; confidence 0.5", "yes; confidence 7", "yes"] {
            assert_eq!(parse_llm_response(s), None, "{s}");
        }
    }

    #[test]
    fn prompt_substitutes_slots() {
        let p = PromptTemplate::shipped();
        let out = p.render("disk <*> failed", &["disk 3 failed".into()]);
        assert!(out.contains("disk <*> failed"));
        assert!(out.contains("- disk 3 failed"));
        assert!(!out.contains("{template}") && !out.contains("{samples}"));
        assert!(!out.contains("# llm prompt"));
        assert!(PromptTemplate::new("{samples}").render("t", &[]).contains("(none)"));
    }

    struct Failing {
        calls: Arc<Mutex<u32>>,
        err: TransportError,
    }

    impl Transport for Failing {
        fn send(&mut self, _req: &LlmRequest) -> Result<String, TransportError> {
            *self.calls.lock().unwrap() += 1;
            Err(self.err.clone())
        }
    }

    #[test]
    fn timeouts_retry_three_times_with_backoff() {
        let calls = Arc::new(Mutex::new(0));
        let sleeps = Arc::new(Mutex::new(Vec::new()));
        let s2 = sleeps.clone();
        let mut ex = LlmExpert::new(
            Box::new(Failing {
                calls: calls.clone(),
                err: TransportError::Timeout,
            }),
            PromptTemplate::shipped(),
            Duration::from_millis(100),
        )
        .with_sleeper(move |d| s2.lock().unwrap().push(d));
        assert_eq!(ex.consult(&query("x")), Consult::Abstain);
        assert_eq!(*calls.lock().unwrap(), 3);
        assert_eq!(
            *sleeps.lock().unwrap(),
            vec![Duration::from_millis(100), Duration::from_millis(200)]
        );
    }

    #[test]
    fn client_errors_are_not_retried() {
        let calls = Arc::new(Mutex::new(0));
        let mut ex = LlmExpert::new(
            Box::new(Failing {
                calls: calls.clone(),
                err: TransportError::Status(401),
            }),
            PromptTemplate::shipped(),
            Duration::ZERO,
        );
        assert_eq!(ex.consult(&query("x")), Consult::Abstain);
        assert_eq!(*calls.lock().unwrap(), 1);
    }

    #[test]
    fn fixtures_replay_by_template() {
        let fx = FixtureTransport::from_ndjson(
            "{\"template\":\"disk <*> failed\",\"response\":\"yes; confidence 0.9; reason: hardware\"}\n",
        )
        .unwrap();
        let mut ex = LlmExpert::new(Box::new(fx), PromptTemplate::shipped(), Duration::ZERO);
        match ex.consult(&query("disk <*> failed")) {
            Consult::Answer(fb) => {
                assert_eq!(fb.decision, Decision::Anomaly);
                assert_eq!(fb.confidence, 0.9);
                assert_eq!(fb.source, FeedbackSource::Llm);
                assert_eq!(fb.rationale.as_deref(), Some("hardware"));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(ex.consult(&query("unknown")), Consult::Abstain);
    }
}
