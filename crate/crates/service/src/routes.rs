use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::{mpsc, oneshot};
use trielog_core::expert::{ExpertError, ExpertFeedback, FeedbackSource};

use crate::api::{
    ErrorBody, FeedbackRequest, IngestRequest, IngestResponse, LineIn, QueriesParams, StatsResponse,
    TemplatesResponse, VerdictEvent, VerdictsParams,
};
use crate::owner::{Command, Shared};

#[derive(Clone)]
pub(crate) struct AppState {
    pub tx: mpsc::Sender<Command>,
    pub shared: Arc<Shared>,
    pub token: Arc<str>,
}

pub(crate) fn router(state: AppState, max_body_bytes: usize) -> Router {
    Router::new()
        .route("/v1/ingest", post(ingest))
        .route("/v1/queries", get(queries))
        .route("/v1/feedback", post(feedback))
        .route("/v1/verdicts", get(verdicts))
        .route("/v1/templates", get(templates))
        .route("/v1/stats", get(stats))
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state)
}

pub(crate) struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut resp = (self.status, Json(ErrorBody { error: self.message })).into_response();
        match self.status {
            StatusCode::TOO_MANY_REQUESTS => {
                resp.headers_mut().insert(header::RETRY_AFTER, HeaderValue::from_static("1"));
            }
            StatusCode::UNAUTHORIZED => {
                resp.headers_mut().insert(header::WWW_AUTHENTICATE, HeaderValue::from_static("Bearer"));
            }
            _ => {}
        }
        resp
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(r.status(), r.body_text())
    }
}

fn owner_gone() -> ApiError {
    ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "stream owner stopped")
}

/// Constant-time comparison, so response timing does not leak the token.
fn token_matches(given: &[u8], want: &[u8]) -> bool {
    given.len() == want.len() && given.iter().zip(want).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
}

async fn auth(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let ok = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| token_matches(t.trim().as_bytes(), state.token.as_bytes()));
    if !ok {
        return ApiError::new(StatusCode::UNAUTHORIZED, "missing or invalid bearer token").into_response();
    }
    next.run(req).await
}

async fn ingest(
    State(state): State<AppState>,
    body: Result<Json<IngestRequest>, JsonRejection>,
) -> Result<Json<IngestResponse>, ApiError> {
    let Json(req) = body?;
    let lines = req
        .lines
        .into_iter()
        .map(|l| l.into_line())
        .collect::<Result<Vec<LineIn>, _>>()
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e))?;
    let accepted = lines.len();
    if accepted == 0 {
        return Ok(Json(IngestResponse { accepted }));
    }
    state.tx.try_send(Command::Ingest(lines)).map_err(|e| match e {
        mpsc::error::TrySendError::Full(_) => ApiError::new(StatusCode::TOO_MANY_REQUESTS, "ingest queue full"),
        mpsc::error::TrySendError::Closed(_) => owner_gone(),
    })?;
    Ok(Json(IngestResponse { accepted }))
}

async fn queries(
    State(state): State<AppState>,
    Query(params): Query<QueriesParams>,
) -> Result<Response, ApiError> {
    match params.state.as_deref() {
        None | Some("pending") => {}
        Some(other) => {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, format!("unsupported state {other:?}")));
        }
    }
    let snap = state.shared.snapshot();
    let offset = params.offset.unwrap_or(0);
    let limit = params.limit.unwrap_or(usize::MAX);
    let page: Vec<_> = snap.pending.iter().skip(offset).take(limit).collect();
    Ok(Json(page).into_response())
}

async fn feedback(
    State(state): State<AppState>,
    body: Result<Json<FeedbackRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let unprocessable = |m: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m);
    let decision = req
        .decision
        .decision()
        .ok_or_else(|| unprocessable("decision must be 0, 1, \"normal\" or \"anomaly\"".into()))?;
    let mut fb = ExpertFeedback::new(decision, req.confidence, FeedbackSource::Human)
        .map_err(|e| unprocessable(e.to_string()))?;
    fb.rationale = req.rationale;
    let (reply, rx) = oneshot::channel();
    state
        .tx
        .send(Command::Feedback { query_id: req.query_id, feedback: fb, reply })
        .await
        .map_err(|_| owner_gone())?;
    match rx.await.map_err(|_| owner_gone())? {
        Ok(body) => Ok(Json(body).into_response()),
        Err(ExpertError::UnknownQuery(id)) => Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown query {id}"))),
        Err(e) => Err(unprocessable(e.to_string())),
    }
}

async fn verdicts(State(state): State<AppState>, Query(params): Query<VerdictsParams>) -> Json<Vec<VerdictEvent>> {
    let since = params.since.unwrap_or(0);
    let buf = state.shared.verdicts.read().unwrap_or_else(|e| e.into_inner());
    let start = buf.partition_point(|v| v.window_id <= since);
    Json(buf.range(start..).cloned().collect())
}

async fn templates(State(state): State<AppState>) -> Json<TemplatesResponse> {
    let snap = state.shared.snapshot();
    Json(TemplatesResponse {
        processed: snap.stats.processed,
        templates: snap.templates.clone(),
    })
}

async fn stats(State(state): State<AppState>) -> Json<StatsResponse> {
    let snap = state.shared.snapshot();
    Json(StatsResponse { stats: snap.stats, pending: snap.pending.len() })
}
