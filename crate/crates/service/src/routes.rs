use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use sitegrounder_core::conversation::{answer_turn, ChatMessage, ChatTurnResult};
use sitegrounder_core::crawler::CrawlConfig;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::config::BusyPolicy;
use crate::error::ApiError;
use crate::ingest::spawn_ingest;
use crate::jobs::{IngestJob, JobError};
use crate::sessions::{Lookup, SharedSession};
use crate::state::AppState;

type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    let cors = cors_layer(&state.config.cors_origins);
    let api = Router::new()
        .route("/api/ingest", post(start_ingest))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}/messages", post(post_message))
        .route("/api/sessions/{id}/history", get(get_history))
        .route("/api/health", get(health))
        .fallback(|| async { ApiError::not_found("NOT_FOUND", "no such route") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(
                StatusCode::METHOD_NOT_ALLOWED,
                "METHOD_NOT_ALLOWED",
                "method not allowed",
            )
        })
        .with_state(state);
    match cors {
        Some(layer) => api.layer(layer),
        None => api,
    }
}

fn cors_layer(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| o.parse().ok()))
    };
    Some(
        CorsLayer::new()
            .allow_origin(allow)
            .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
            .allow_headers(Any),
    )
}

#[derive(Debug, Deserialize)]
struct IngestRequest {
    seed_url: String,
    max_pages: Option<usize>,
    max_depth: Option<usize>,
}

async fn start_ingest(
    State(state): Shared,
    body: Result<Json<IngestRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(req) = body?;
    let defaults = &state.config.crawl;
    let mut cfg = CrawlConfig::new(&req.seed_url)
        .map_err(|e| ApiError::bad_request("INVALID_URL", e.to_string()))?;
    cfg.max_pages = req.max_pages.unwrap_or(defaults.max_pages);
    cfg.max_depth = req.max_depth.unwrap_or(defaults.max_depth);
    cfg.politeness_delay = std::time::Duration::from_millis(defaults.politeness_delay_ms);
    cfg.fetch_timeout = std::time::Duration::from_millis(defaults.fetch_timeout_ms);
    cfg.workers = defaults.workers;
    cfg.validate()
        .map_err(|e| ApiError::bad_request("INVALID_REQUEST", e.to_string()))?;

    let job = state
        .jobs
        .start(cfg.seed_url.as_str())
        .map_err(|e| match e {
            JobError::Busy(_) => ApiError::conflict("INGEST_ACTIVE", e.to_string()),
            other => ApiError::internal(other.to_string()),
        })?;
    spawn_ingest(state.clone(), job.job_id.clone(), cfg);
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job.job_id }))))
}

async fn get_job(
    State(state): Shared,
    Path(id): Path<String>,
) -> Result<Json<IngestJob>, ApiError> {
    state
        .jobs
        .get(&id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found("JOB_NOT_FOUND", format!("unknown job {id}")))
}

async fn create_session(State(state): Shared) -> impl IntoResponse {
    let id = state.sessions.create(&state.config.llm.profile_id);
    (StatusCode::CREATED, Json(json!({ "session_id": id })))
}

fn lookup(state: &AppState, id: &str) -> Result<SharedSession, ApiError> {
    match state.sessions.get(id) {
        Lookup::Live(s) => Ok(s),
        Lookup::Expired => Err(ApiError::new(
            StatusCode::GONE,
            "SESSION_EXPIRED",
            format!("session {id} has expired"),
        )),
        Lookup::Unknown => Err(ApiError::not_found(
            "SESSION_NOT_FOUND",
            format!("unknown session {id}"),
        )),
    }
}

#[derive(Debug, Deserialize)]
struct MessageRequest {
    text: String,
}

async fn post_message(
    State(state): Shared,
    Path(id): Path<String>,
    body: Result<Json<MessageRequest>, JsonRejection>,
) -> Result<Json<ChatTurnResult>, ApiError> {
    let session = lookup(&state, &id)?;
    let Json(req) = body?;
    let text = req.text.trim();
    if text.is_empty() {
        return Err(ApiError::bad_request(
            "EMPTY_MESSAGE",
            "text must not be empty",
        ));
    }
    let mut guard = match state.config.busy_policy {
        BusyPolicy::Wait => session.lock().await,
        BusyPolicy::Reject => session.try_lock().map_err(|_| {
            ApiError::conflict(
                "SESSION_BUSY",
                format!("session {id} is answering another message"),
            )
        })?,
    };
    let index = state.index();
    let opts = state.config.llm.chain_options(state.config.k);
    let result = answer_turn(
        &mut guard,
        text,
        &index,
        state.embedder.as_ref(),
        state.llm.as_ref(),
        &opts,
    )
    .await?;
    Ok(Json(result))
}

async fn get_history(
    State(state): Shared,
    Path(id): Path<String>,
) -> Result<Json<Vec<ChatMessage>>, ApiError> {
    let session = lookup(&state, &id)?;
    let guard = session.lock().await;
    Ok(Json(guard.history().to_vec()))
}

async fn health(State(state): Shared) -> impl IntoResponse {
    Json(json!({
        "status": "ok",
        "index_count": state.index().len(),
        "profile": state.config.llm.profile_id,
        "embedder": state.embedder.model_id(),
        "ingest_active": state.jobs.active().is_some(),
    }))
}
