//! Raw line preprocessing.
//!
//! Each raw line goes through three steps, in order:
//!
//! 1. every configured masking pattern is applied in order and each match is
//!    replaced by the placeholder `<*>`,
//! 2. optional level / component fields are extracted from the original text,
//! 3. the masked text is split on every character that is not a letter or a
//!    digit. The placeholder survives as a single token.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Placeholder emitted for masked parameters and template wildcards.
pub const PLACEHOLDER: &str = "<*>";

pub const DEFAULT_MAX_LINE_LEN: usize = 10_000;

const SHIPPED_STOPWORDS: &str = include_str!("../data/stopwords_v1.txt");

/// Optional mask for short numeric fields (`6.0`, `247`). Not part of the
/// default set because it also swallows small numeric constants.
pub const NUMERIC_FIELD_PATTERN: &str = r"(?-u:\b)\d+(?:\.\d+)*(?-u:\b)";

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("masking pattern `{name}` does not compile: {source}")]
    Pattern {
        name: String,
        #[source]
        source: regex::Error,
    },
    #[error("duplicate masking pattern name `{0}`")]
    DuplicateName(String),
    #[error("cannot read stopword file {path}: {source}")]
    Stopwords {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed line {line_no}: {reason}")]
    MalformedLine { line_no: u64, reason: &'static str },
}

/// A line as it arrives from the stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawLine {
    pub text: String,
    pub line_no: u64,
    /// Epoch milliseconds.
    pub timestamp: Option<i64>,
}

impl RawLine {
    pub fn new(line_no: u64, text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            line_no,
            timestamp: None,
        }
    }

    pub fn at(mut self, timestamp_ms: i64) -> Self {
        self.timestamp = Some(timestamp_ms);
        self
    }
}

/// One preprocessed line.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub line_no: u64,
    pub timestamp: Option<i64>,
    pub level: Option<String>,
    pub component: Option<String>,
    pub tokens: Vec<String>,
    pub masked_text: String,
    /// Set when the input exceeded the configured maximum length and was cut.
    pub truncated: bool,
}

/// Serializable form of one masking pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub name: String,
    pub regex: String,
}

/// Serializable preprocessing settings, as found in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSettings {
    #[serde(rename = "mask")]
    pub masks: Vec<MaskSpec>,
    pub level_pattern: Option<String>,
    pub component_pattern: Option<String>,
    /// Plain-text stopword file, one word per line. The shipped list is used
    /// when absent.
    pub stopwords_file: Option<String>,
    pub max_line_len: usize,
}

impl Default for PreprocessSettings {
    fn default() -> Self {
        Self {
            masks: default_mask_specs(),
            level_pattern: None,
            component_pattern: None,
            stopwords_file: None,
            max_line_len: DEFAULT_MAX_LINE_LEN,
        }
    }
}

fn default_mask_specs() -> Vec<MaskSpec> {
    [
        ("url", r"[A-Za-z][A-Za-z0-9+.\-]*://[^\s]+"),
        (
            "ipv4",
            r"(?-u:\b)(?:\d{1,3}\.){3}\d{1,3}(?::\d{1,5})?(?-u:\b)",
        ),
        ("hex_id", r"(?-u:\b)(?:0[xX])?[0-9A-Fa-f]{8,}(?-u:\b)"),
        ("long_number", r"(?-u:\b)\d{4,}(?-u:\b)"),
    ]
    .into_iter()
    .map(|(name, regex)| MaskSpec {
        name: name.to_string(),
        regex: regex.to_string(),
    })
    .collect()
}

#[derive(Debug, Clone)]
struct MaskPattern {
    name: String,
    regex: Regex,
}

/// Compiled preprocessing configuration.
#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    masks: Vec<MaskPattern>,
    level: Option<Regex>,
    component: Option<Regex>,
    stopwords: Arc<HashSet<String>>,
    max_line_len: usize,
}

impl PreprocessConfig {
    /// A configuration with no masking, no metadata extraction and the
    /// shipped stopword list.
    pub fn bare() -> Self {
        Self {
            masks: Vec::new(),
            level: None,
            component: None,
            stopwords: Arc::new(parse_stopwords(SHIPPED_STOPWORDS)),
            max_line_len: DEFAULT_MAX_LINE_LEN,
        }
    }

    pub fn from_settings(settings: &PreprocessSettings) -> Result<Self, PreprocessError> {
        let mut cfg = Self::bare();
        for spec in &settings.masks {
            cfg = cfg.with_mask(&spec.name, &spec.regex)?;
        }
        if let Some(p) = &settings.level_pattern {
            cfg.level = Some(compile("level_pattern", p)?);
        }
        if let Some(p) = &settings.component_pattern {
            cfg.component = Some(compile("component_pattern", p)?);
        }
        if let Some(path) = &settings.stopwords_file {
            cfg.stopwords = Arc::new(load_stopwords(Path::new(path))?);
        }
        cfg.max_line_len = settings.max_line_len.max(1);
        Ok(cfg)
    }

    /// Appends a masking pattern. Patterns apply in insertion order.
    pub fn with_mask(mut self, name: &str, regex: &str) -> Result<Self, PreprocessError> {
        if self.masks.iter().any(|m| m.name == name) {
            return Err(PreprocessError::DuplicateName(name.to_string()));
        }
        self.masks.push(MaskPattern {
            name: name.to_string(),
            regex: compile(name, regex)?,
        });
        Ok(self)
    }

    pub fn with_level_pattern(mut self, regex: &str) -> Result<Self, PreprocessError> {
        self.level = Some(compile("level_pattern", regex)?);
        Ok(self)
    }

    pub fn with_component_pattern(mut self, regex: &str) -> Result<Self, PreprocessError> {
        self.component = Some(compile("component_pattern", regex)?);
        Ok(self)
    }

    pub fn with_max_line_len(mut self, max: usize) -> Self {
        self.max_line_len = max.max(1);
        self
    }

    pub fn with_stopwords(mut self, words: HashSet<String>) -> Self {
        self.stopwords = Arc::new(words);
        self
    }

    pub fn mask_names(&self) -> impl Iterator<Item = &str> {
        self.masks.iter().map(|m| m.name.as_str())
    }

    pub fn stopwords(&self) -> &Arc<HashSet<String>> {
        &self.stopwords
    }

    pub fn max_line_len(&self) -> usize {
        self.max_line_len
    }

    /// Applies every masking pattern in order.
    pub fn mask(&self, text: &str) -> String {
        let mut out = text.to_string();
        for m in &self.masks {
            if let std::borrow::Cow::Owned(s) = m.regex.replace_all(&out, PLACEHOLDER) {
                out = s;
            }
        }
        out
    }
}

/// Patterns for IPv4 addresses, URLs, hexadecimal IDs of at least 8 digits
/// and decimal numbers of at least 4 digits, plus the shipped stopword list.
pub fn default_masking_config() -> PreprocessConfig {
    PreprocessConfig::from_settings(&PreprocessSettings::default())
        .expect("shipped masking patterns compile")
}

fn compile(name: &str, regex: &str) -> Result<Regex, PreprocessError> {
    Regex::new(regex).map_err(|source| PreprocessError::Pattern {
        name: name.to_string(),
        source,
    })
}

fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn load_stopwords(path: &Path) -> Result<HashSet<String>, PreprocessError> {
    let text = std::fs::read_to_string(path).map_err(|source| PreprocessError::Stopwords {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_stopwords(&text))
}

/// The stopword list shipped with the crate.
pub fn shipped_stopwords() -> HashSet<String> {
    parse_stopwords(SHIPPED_STOPWORDS)
}

/// Splits on every non-alphanumeric character; `<*>` is kept whole.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    let bytes = text.as_bytes();
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if c.is_alphanumeric() {
            start.get_or_insert(i);
            continue;
        }
        if let Some(s) = start.take() {
            tokens.push(text[s..i].to_string());
        }
        if c == '<' && bytes.get(i + 1) == Some(&b'*') && bytes.get(i + 2) == Some(&b'>') {
            tokens.push(PLACEHOLDER.to_string());
            iter.next();
            iter.next();
        }
    }
    if let Some(s) = start {
        tokens.push(text[s..].to_string());
    }
    tokens
}

/// Turns a raw line into a [`LogRecord`].
///
/// Empty (or whitespace-only) lines are rejected. Over-long lines are cut at
/// the configured maximum and flagged rather than rejected.
pub fn preprocess(line: &RawLine, cfg: &PreprocessConfig) -> Result<LogRecord, PreprocessError> {
    if line.text.trim().is_empty() {
        return Err(PreprocessError::MalformedLine {
            line_no: line.line_no,
            reason: "empty line",
        });
    }
    let (text, truncated) = truncate_chars(&line.text, cfg.max_line_len);
    let masked_text = cfg.mask(text);
    let level = extract(cfg.level.as_ref(), text);
    let component = extract(cfg.component.as_ref(), text);
    Ok(LogRecord {
        line_no: line.line_no,
        timestamp: line.timestamp,
        level,
        component,
        tokens: tokenize(&masked_text),
        masked_text,
        truncated,
    })
}

fn truncate_chars(text: &str, max: usize) -> (&str, bool) {
    match text.char_indices().nth(max) {
        Some((idx, _)) => (&text[..idx], true),
        None => (text, false),
    }
}

fn extract(re: Option<&Regex>, text: &str) -> Option<String> {
    re.and_then(|re| re.captures(text))
        .and_then(|caps| caps.get(1))
        .map(|m| m.as_str().to_string())
}
