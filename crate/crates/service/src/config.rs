use std::net::SocketAddr;

use serde::{Deserialize, Serialize};

pub const DEFAULT_TOKEN_ENV: &str = "TRIELOG_API_TOKEN";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ApiConfigError {
    #[error("environment variable {0} is not set or empty")]
    MissingToken(String),
    #[error("{0} must be positive")]
    Zero(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApiConfig {
    pub bind: SocketAddr,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    /// Pending queries kept before the lowest-tp ones are dropped.
    pub max_pending: usize,
    /// Closed windows kept for `/v1/verdicts`.
    pub verdict_buffer: usize,
    /// Ingest batches that may wait for the stream owner.
    pub queue_capacity: usize,
    pub max_body_bytes: usize,
}

impl Default for ApiConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            token_env: DEFAULT_TOKEN_ENV.to_string(),
            max_pending: 1000,
            verdict_buffer: 10_000,
            queue_capacity: 64,
            max_body_bytes: 5 * 1024 * 1024,
        }
    }
}

impl ApiConfig {
    pub fn validate(&self) -> Result<(), ApiConfigError> {
        for (name, v) in [
            ("max_pending", self.max_pending),
            ("verdict_buffer", self.verdict_buffer),
            ("queue_capacity", self.queue_capacity),
            ("max_body_bytes", self.max_body_bytes),
        ] {
            if v == 0 {
                return Err(ApiConfigError::Zero(name));
            }
        }
        Ok(())
    }

    /// Reads the bearer token from the configured environment variable.
    pub fn token(&self) -> Result<String, ApiConfigError> {
        match std::env::var(&self.token_env) {
            Ok(t) if !t.is_empty() => Ok(t),
            _ => Err(ApiConfigError::MissingToken(self.token_env.clone())),
        }
    }
}
