//! Read-only JSON API over a loaded store and its hubness metadata.

use std::path::Path;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use termite::join::{JoinHit, RemovedHub};
use termite::{termite_join, EmbeddingStore, Error, HubnessMetadata};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_LIMIT: usize = 10;

pub struct AppState {
    pub store: EmbeddingStore,
    pub meta: HubnessMetadata,
    /// Width of the hashed input vectors the model was trained on.
    pub input_dim: usize,
    /// Entity strings in sort order, with their lowercase forms for prefix search.
    sorted: Vec<(String, String)>,
}

impl AppState {
    pub fn new(store: EmbeddingStore, meta: HubnessMetadata, input_dim: usize) -> Self {
        let mut sorted: Vec<(String, String)> = store
            .entities()
            .iter()
            .map(|e| (e.clone(), e.to_lowercase()))
            .collect();
        sorted.sort();
        AppState {
            store,
            meta,
            input_dim,
            sorted,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct QueryResponse {
    pub query: String,
    pub results: Vec<JoinHit>,
    pub removed_hubs: Vec<RemovedHub>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Stats {
    pub entities: usize,
    pub dim: usize,
    pub input_dim: usize,
    pub hubness_cutoff: u64,
    pub k_h: usize,
}

// Parameters arrive as strings so malformed values get our own 400 body
// instead of the extractor's plain-text rejection.
#[derive(Debug, Deserialize)]
struct QueryParams {
    entity: Option<String>,
    k: Option<String>,
    confidence: Option<String>,
}

#[derive(Debug, Deserialize)]
struct EntityParams {
    prefix: Option<String>,
    limit: Option<String>,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn parse_count(raw: Option<&str>, default: usize, name: &str) -> Result<usize, String> {
    match raw {
        None => Ok(default),
        Some(s) => s
            .trim()
            .parse()
            .map_err(|_| format!("{name} must be a non-negative integer, got `{s}`")),
    }
}

fn parse_flag(raw: Option<&str>) -> Result<bool, String> {
    match raw.map(str::trim) {
        None | Some("false") | Some("0") => Ok(false),
        Some("true") | Some("1") | Some("") => Ok(true),
        Some(other) => Err(format!("confidence must be true or false, got `{other}`")),
    }
}

async fn query(State(state): State<Arc<AppState>>, Query(p): Query<QueryParams>) -> Response {
    let Some(entity) = p.entity else {
        return error(StatusCode::BAD_REQUEST, "missing entity parameter");
    };
    let k = match parse_count(p.k.as_deref(), DEFAULT_K, "k") {
        Ok(k) => k,
        Err(msg) => return error(StatusCode::BAD_REQUEST, msg),
    };
    let with_confidence = match parse_flag(p.confidence.as_deref()) {
        Ok(c) => c,
        Err(msg) => return error(StatusCode::BAD_REQUEST, msg),
    };
    match termite_join(&state.store, &state.meta, &entity, k, with_confidence) {
        Ok(r) => Json(QueryResponse {
            query: entity,
            results: r.results,
            removed_hubs: r.removed_hubs,
        })
        .into_response(),
        Err(Error::EntityNotFound(_)) => error(StatusCode::NOT_FOUND, "entity-not-found"),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn entities(State(state): State<Arc<AppState>>, Query(p): Query<EntityParams>) -> Response {
    let limit = match parse_count(p.limit.as_deref(), DEFAULT_LIMIT, "limit") {
        Ok(l) => l,
        Err(msg) => return error(StatusCode::BAD_REQUEST, msg),
    };
    let prefix = p.prefix.unwrap_or_default().to_lowercase();
    let found: Vec<&str> = state
        .sorted
        .iter()
        .filter(|(_, lower)| lower.starts_with(&prefix))
        .take(limit)
        .map(|(e, _)| e.as_str())
        .collect();
    Json(found).into_response()
}

async fn stats(State(state): State<Arc<AppState>>) -> Json<Stats> {
    Json(Stats {
        entities: state.store.len(),
        dim: state.store.dim(),
        input_dim: state.input_dim,
        hubness_cutoff: state.meta.cutoff,
        k_h: state.meta.k,
    })
}

/// API routes, with static files from `static_dir` (if any) served at `/`.
pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/query", get(query))
        .route("/api/entities", get(entities))
        .route("/api/stats", get(stats))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(state: AppState, static_dir: Option<&Path>, port: u16) -> std::io::Result<()> {
    let app = router(Arc::new(state), static_dir);
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await
}
