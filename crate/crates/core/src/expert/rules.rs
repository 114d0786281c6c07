//! Keyword rules: an ordered list of (pattern, decision, confidence).

use std::path::Path;

use regex::Regex;
use serde::Deserialize;
use thiserror::Error;

use super::{Consult, Expert, ExpertFeedback, ExpertQuery, FeedbackSource};
use crate::trie::Decision;

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("rules file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("rules: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("rule {index}: bad pattern: {source}")]
    Pattern {
        index: usize,
        #[source]
        source: regex::Error,
    },
    #[error("rule {index}: {msg}")]
    Invalid { index: usize, msg: String },
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub pattern: Regex,
    pub decision: Decision,
    pub confidence: f64,
}

impl Rule {
    pub fn new(pattern: &str, decision: Decision, confidence: f64) -> Result<Self, RuleError> {
        let pattern = Regex::new(pattern).map_err(|source| RuleError::Pattern { index: 0, source })?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(RuleError::Invalid {
                index: 0,
                msg: format!("confidence {confidence} is outside [0, 1]"),
            });
        }
        Ok(Self {
            pattern,
            decision,
            confidence,
        })
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DecisionSpec {
    Bit(u8),
    Word(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleSpec {
    pattern: String,
    decision: DecisionSpec,
    confidence: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesFile {
    #[serde(default)]
    rule: Vec<RuleSpec>,
}

/// First matching rule answers; no match abstains.
#[derive(Debug, Clone, Default)]
pub struct RuleExpert {
    rules: Vec<Rule>,
}

impl RuleExpert {
    pub fn new(rules: Vec<Rule>) -> Self {
        Self { rules }
    }

    /// Parses `[[rule]]` tables with `pattern`, `decision` (0, 1, "normal"
    /// or "anomaly") and `confidence`.
    pub fn from_toml(text: &str) -> Result<Self, RuleError> {
        let file: RulesFile = toml::from_str(text)?;
        let mut rules = Vec::with_capacity(file.rule.len());
        for (index, spec) in file.rule.into_iter().enumerate() {
            let decision = match &spec.decision {
                DecisionSpec::Bit(b) => Decision::from_bit(*b),
                DecisionSpec::Word(w) => match w.to_ascii_lowercase().as_str() {
                    "anomaly" => Some(Decision::Anomaly),
                    "normal" => Some(Decision::Normal),
                    _ => None,
                },
            }
            .ok_or_else(|| RuleError::Invalid {
                index,
                msg: "decision must be 0, 1, \"normal\" or \"anomaly\"".into(),
            })?;
            let rule = Rule::new(&spec.pattern, decision, spec.confidence).map_err(|e| match e {
                RuleError::Pattern { source, .. } => RuleError::Pattern { index, source },
                RuleError::Invalid { msg, .. } => RuleError::Invalid { index, msg },
                other => other,
            })?;
            rules.push(rule);
        }
        Ok(Self { rules })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RuleError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RuleError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Tries the canonical template text, then its rendered form.
    pub fn judge(&self, template_text: &str, rendered: &str) -> Option<ExpertFeedback> {
        let (i, rule) = self
            .rules
            .iter()
            .enumerate()
            .find(|(_, r)| r.pattern.is_match(template_text) || r.pattern.is_match(rendered))?;
        Some(ExpertFeedback {
            decision: rule.decision,
            confidence: rule.confidence,
            source: FeedbackSource::Rule,
            rationale: Some(format!("rule {i}: {}", rule.pattern.as_str())),
        })
    }
}

impl Expert for RuleExpert {
    fn name(&self) -> &str {
        "rule"
    }

    fn consult(&mut self, query: &ExpertQuery) -> Consult {
        match self.judge(&query.template_text, &query.rendered) {
            Some(fb) => Consult::Answer(fb),
            None => Consult::Abstain,
        }
    }
}
