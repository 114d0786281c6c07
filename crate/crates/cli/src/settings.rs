//! Config file loading and flag overrides.
//!
//! The file is the engine TOML with an optional `[service]` table. Each
//! flag below and every `--set key=value` rewrites one key before the
//! file is deserialized, so flags always win.

use std::path::{Path, PathBuf};

use toml::{Table, Value};
use trielog_core::config::EngineConfig;
use trielog_service::ApiConfig;

#[derive(Debug, thiserror::Error)]
pub enum SettingsError {
    #[error("config file {path}: {msg}")]
    File { path: String, msg: String },
    #[error("override {0:?}: expected KEY=VALUE")]
    Override(String),
    #[error("override {key}: {msg}")]
    Path { key: String, msg: String },
    #[error("{0}")]
    Invalid(String),
}

macro_rules! config_flags {
    ($( $field:ident => $path:literal ),* $(,)?) => {
        /// One flag per scalar config key.
        #[derive(Debug, Default, Clone, clap::Args)]
        #[command(next_help_heading = "Config overrides")]
        pub struct ConfigFlags {
            $(
                #[arg(long, global = true, value_name = "VALUE", help = concat!("Overrides `", $path, "`"))]
                pub $field: Option<String>,
            )*
            /// Overrides any key, for example `--set trie.match_threshold=0.6`.
            #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
            pub set: Vec<String>,
        }

        impl ConfigFlags {
            pub fn overrides(&self) -> Result<Vec<(String, String)>, SettingsError> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push(($path.to_string(), v.clone()));
                    }
                )*
                for s in &self.set {
                    let (k, v) = s.split_once('=').ok_or_else(|| SettingsError::Override(s.clone()))?;
                    out.push((k.trim().to_string(), v.trim().to_string()));
                }
                Ok(out)
            }
        }
    };
}

config_flags! {
    level_pattern => "preprocess.level_pattern",
    component_pattern => "preprocess.component_pattern",
    stopwords_file => "preprocess.stopwords_file",
    max_line_len => "preprocess.max_line_len",
    token_key_len => "trie.token_key_len",
    prefix_depth => "trie.prefix_depth",
    max_children => "trie.max_children",
    match_threshold => "trie.match_threshold",
    update_period => "trie.update_period",
    temperature => "detector.temperature",
    lru_capacity => "detector.lru_capacity",
    min_fit_size => "detector.min_fit_size",
    tail_form => "detector.tail_form",
    query_threshold => "expert.query_threshold",
    alarm_threshold => "expert.alarm_threshold",
    pending_timeout => "expert.pending_timeout",
    expert_chain => "expert.expert_chain",
    window_mode => "windows.mode",
    window_span => "windows.span",
    window_step => "windows.step",
    synthetic_rate => "windows.synthetic_rate",
    window_epoch => "windows.epoch",
    rules_file => "rules.file",
    llm_url => "llm.url",
    llm_token_env => "llm.token_env",
    llm_timeout => "llm.timeout",
    llm_backoff => "llm.backoff",
    llm_prompt_file => "llm.prompt_file",
    llm_fixtures => "llm.fixtures",
    kb_path => "knowledge_base.path",
    bind => "service.bind",
    api_token_env => "service.token_env",
    max_pending => "service.max_pending",
    verdict_buffer => "service.verdict_buffer",
    queue_capacity => "service.queue_capacity",
    max_body_bytes => "service.max_body_bytes",
}

#[derive(Debug, Clone, Default)]
pub struct Settings {
    pub engine: EngineConfig,
    pub service: ApiConfig,
}

/// A TOML literal when it parses as one, otherwise a bare string. Lists
/// may also be given comma-separated.
fn parse_value(key: &str, raw: &str) -> Value {
    if let Ok(t) = format!("v = {raw}").parse::<Table>() {
        if let Some(v) = t.get("v") {
            return v.clone();
        }
    }
    if key.ends_with("expert_chain") {
        return Value::Array(
            raw.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| Value::String(s.to_string()))
                .collect(),
        );
    }
    Value::String(raw.to_string())
}

fn set_path(root: &mut Table, key: &str, value: Value) -> Result<(), SettingsError> {
    let err = |msg: &str| SettingsError::Path { key: key.to_string(), msg: msg.to_string() };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(err("empty key segment"));
    }
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut table = root;
    for p in parents {
        table = table
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .ok_or_else(|| err("parent is not a table"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl Settings {
    pub fn load(file: Option<&Path>, flags: &ConfigFlags) -> Result<Self, SettingsError> {
        let mut table = match file {
            Some(path) => {
                let file_err = |msg: String| SettingsError::File { path: path.display().to_string(), msg };
                let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
                text.parse::<Table>().map_err(|e| file_err(e.to_string()))?
            }
            None => Table::new(),
        };
        for (k, v) in flags.overrides()? {
            let value = parse_value(&k, &v);
            set_path(&mut table, &k, value)?;
        }
        Self::from_table(table, file.map(Path::to_path_buf))
    }

    fn from_table(mut table: Table, file: Option<PathBuf>) -> Result<Self, SettingsError> {
        let invalid = |e: &dyn std::fmt::Display| match &file {
            Some(p) => SettingsError::File { path: p.display().to_string(), msg: e.to_string() },
            None => SettingsError::Invalid(e.to_string()),
        };
        let service = match table.remove("service") {
            Some(v) => v.try_into::<ApiConfig>().map_err(|e| invalid(&e))?,
            None => ApiConfig::default(),
        };
        let engine: EngineConfig = Value::Table(table).try_into().map_err(|e| invalid(&e))?;
        engine.validate().map_err(|e| invalid(&e))?;
        service.validate().map_err(|e| invalid(&e))?;
        Ok(Self { engine, service })
    }
}
