//! HTTP front end for the engine.
//!
//! Handlers never touch the engine. Ingest batches and feedback go through
//! a bounded mailbox to a single owner thread; read endpoints serve the
//! snapshot the owner publishes after each drained batch.
//!
//! ```text
//! POST /v1/ingest      {"lines": ["text", {"text", "timestamp", "level", "component"}]}
//! GET  /v1/queries     ?state=pending&offset=&limit=
//! POST /v1/feedback    {"query_id", "decision", "confidence"}
//! GET  /v1/verdicts    ?since=<window_id>
//! GET  /v1/templates
//! GET  /v1/stats
//! ```

pub mod api;
pub mod config;
mod owner;
mod routes;

use std::sync::Arc;

use axum::Router;
use tokio::sync::mpsc;
use trielog_core::engine::Engine;

pub use config::{ApiConfig, ApiConfigError, DEFAULT_TOKEN_ENV};
pub use owner::{Owner, Snapshot};

/// Builds the router and the owner that must be started for it to make
/// progress.
pub fn build(mut engine: Engine, cfg: &ApiConfig, token: impl Into<String>) -> (Router, Owner) {
    engine.experts_mut().set_max_pending(Some(cfg.max_pending));
    let (tx, rx) = mpsc::channel(cfg.queue_capacity);
    let shared = Arc::new(owner::Shared::default());
    let owner = Owner::new(engine, rx, Arc::clone(&shared), cfg.verdict_buffer);
    let state = routes::AppState {
        tx,
        shared,
        token: Arc::from(token.into()),
    };
    (routes::router(state, cfg.max_body_bytes), owner)
}

/// Serves on `listener` until `shutdown` resolves, then waits for the
/// owner to drain and returns the engine. `cfg.bind` is not used here.
pub async fn serve(
    listener: tokio::net::TcpListener,
    engine: Engine,
    cfg: &ApiConfig,
    token: impl Into<String>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<Engine> {
    let (router, owner) = build(engine, cfg, token);
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let handle = owner.spawn();
    axum::serve(listener, router).with_graceful_shutdown(shutdown).await?;
    tokio::task::spawn_blocking(move || handle.join())
        .await
        .map_err(std::io::Error::other)?
        .map_err(|_| std::io::Error::other("stream owner panicked"))
}
