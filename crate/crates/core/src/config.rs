//! The engine configuration file.
//!
//! A TOML document with one table per part:
//!
//! ```toml
//! [preprocess]
//! max_line_len = 10000
//! [[preprocess.mask]]
//! name = "ipv4"
//! regex = '(?:\d{1,3}\.){3}\d{1,3}'
//!
//! [trie]
//! token_key_len = 3
//!
//! [detector]
//! temperature = 10.0
//!
//! [expert]
//! query_threshold = 0.5
//! pending_timeout = "10m"
//! expert_chain = ["rule", "llm", "human"]
//!
//! [windows]
//! mode = "sliding"
//! span = "10m"
//! step = "2m"
//!
//! [rules]
//! file = "rules.toml"
//!
//! [llm]
//! url = "http://localhost:8000/v1/judge"
//! token_env = "TRIELOG_LLM_TOKEN"
//!
//! [knowledge_base]
//! path = "kb.ndjson"
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evt::DetectorConfig;
use crate::expert::LoopConfig;
use crate::preprocess::PreprocessSettings;
use crate::trie::TrieConfig;
use crate::windows::WindowConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config file {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulesSettings {
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    pub url: Option<String>,
    /// Environment variable holding the bearer token.
    pub token_env: String,
    #[serde(with = "serde_duration")]
    pub timeout: Duration,
    #[serde(with = "serde_duration")]
    pub backoff: Duration,
    /// Prompt template file; the shipped prompt when absent.
    pub prompt_file: Option<PathBuf>,
    /// Recorded responses to replay instead of calling `url`.
    pub fixtures: Option<PathBuf>,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            url: None,
            token_env: "TRIELOG_LLM_TOKEN".into(),
            timeout: Duration::from_secs(30),
            backoff: Duration::from_millis(500),
            prompt_file: None,
            fixtures: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KbSettings {
    /// Append-only log; in memory when absent.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub preprocess: PreprocessSettings,
    pub trie: TrieConfig,
    pub detector: DetectorConfig,
    pub expert: LoopConfig,
    pub windows: WindowConfig,
    pub rules: RulesSettings,
    pub llm: LlmSettings,
    pub knowledge_base: KbSettings,
}

impl EngineConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    /// Checks every part without building anything.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.trie.validate().map_err(|e| inv(&e))?;
        self.detector.validate().map_err(|e| inv(&e))?;
        self.expert.validate().map_err(|e| inv(&e))?;
        self.windows.validate().map_err(|e| inv(&e))?;
        for name in &self.expert.expert_chain {
            match name.as_str() {
                "human" => {}
                "rule" if self.rules.file.is_none() => {
                    return Err(ConfigError::Invalid("expert \"rule\" needs [rules] file".into()))
                }
                "llm" if self.llm.url.is_none() && self.llm.fixtures.is_none() => {
                    return Err(ConfigError::Invalid(
                        "expert \"llm\" needs [llm] url or fixtures".into(),
                    ))
                }
                "rule" | "llm" => {}
                other => {
                    return Err(ConfigError::Invalid(format!(
                        "unknown expert {other:?}; expected rule, llm or human"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Durations written as human-readable strings such as "10m" or "1h 30m".
pub(crate) mod serde_duration {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&humantime::format_duration(*d).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let s = String::deserialize(d)?;
        humantime::parse_duration(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::windows::WindowMode;

    #[test]
    fn empty_file_gives_defaults() {
        let c = EngineConfig::from_toml("").unwrap();
        assert_eq!(c, EngineConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn documented_example_parses() {
        let text = r#"
[preprocess]
max_line_len = 500
[[preprocess.mask]]
name = "ipv4"
regex = '(?:\d{1,3}\.){3}\d{1,3}'

[trie]
token_key_len = 2

[detector]
temperature = 5.0

[expert]
query_threshold = 0.7
pending_timeout = "90s"
expert_chain = ["rule", "llm", "human"]

[windows]
mode = "sliding"
span = "10m"
step = "2m"

[rules]
file = "rules.toml"

[llm]
url = "http://localhost:9/judge"
timeout = "5s"
"#;
        let c = EngineConfig::from_toml(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.preprocess.masks.len(), 1);
        assert_eq!(c.trie.token_key_len, 2);
        assert_eq!(c.expert.pending_timeout, Duration::from_secs(90));
        assert_eq!(c.windows.mode, WindowMode::Sliding);
        assert_eq!(c.llm.timeout, Duration::from_secs(5));
        let back = EngineConfig::from_toml(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(EngineConfig::from_toml("[trie]\nbogus = 1").is_err());
        assert!(EngineConfig::from_toml("[expert]\npending_timeout = \"never\"").is_err());
        let c = EngineConfig::from_toml("[expert]\nexpert_chain = [\"rule\"]").unwrap();
        assert!(c.validate().is_err());
        let c = EngineConfig::from_toml("[expert]\nexpert_chain = [\"oracle\"]").unwrap();
        assert!(c.validate().is_err());
        let c = EngineConfig::from_toml("[windows]\nmode = \"sliding\"\nspan = \"1m\"\nstep = \"2m\"").unwrap();
        assert!(c.validate().is_err());
    }
}
