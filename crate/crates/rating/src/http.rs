use std::future::Future;
use std::io;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tower::ServiceExt;
use tower_http::services::{ServeDir, ServeFile};

use crate::store::{MediaSide, RatingStore, ServiceError, StoredRating};

#[derive(Debug, Clone, Default)]
pub struct ServiceOptions {
    /// Static annotation UI bundle served at `/`.
    pub ui_dir: Option<PathBuf>,
}

struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match &e {
            ServiceError::EmptyRater => StatusCode::BAD_REQUEST,
            ServiceError::OutOfRange { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::UnknownDataset(_)
            | ServiceError::UnknownVideo(_)
            | ServiceError::UnknownMedia(_) => StatusCode::NOT_FOUND,
            ServiceError::Media { .. } | ServiceError::Corrupt { .. } | ServiceError::Io { .. } => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        ApiError {
            status,
            code: e.code(),
            message: e.to_string(),
        }
    }
}

impl From<tokio::task::JoinError> for ApiError {
    fn from(e: tokio::task::JoinError) -> Self {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "INTERNAL",
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

type Shared = State<Arc<RatingStore>>;

pub fn router(store: Arc<RatingStore>, options: &ServiceOptions) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/tasks/next", get(next_task))
        .route("/api/ratings", post(submit))
        .route("/api/aggregates", get(aggregates))
        .route("/api/export/human_scores.csv", get(export))
        .route("/api/media/{video_id}/{side}", get(media))
        .with_state(store);
    match &options.ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api.route("/", get(no_ui)),
    }
}

/// Serves until `shutdown` resolves, then syncs the record log.
pub async fn serve(
    listener: tokio::net::TcpListener,
    store: Arc<RatingStore>,
    options: &ServiceOptions,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    axum::serve(listener, router(store.clone(), options))
        .with_graceful_shutdown(shutdown)
        .await?;
    store.flush().map_err(io::Error::other)
}

async fn health(State(store): Shared) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "dataset_id": store.manifest().dataset_id,
        "videos": store.manifest().videos.len(),
        "records": store.snapshot().len(),
    }))
}

#[derive(Deserialize)]
struct NextQuery {
    #[serde(default)]
    rater: String,
    dataset: Option<String>,
}

async fn next_task(State(store): Shared, Query(q): Query<NextQuery>) -> Result<Json<Value>, ApiError> {
    let task = store.next_task(&q.rater, q.dataset.as_deref())?;
    Ok(Json(json!({ "task": task })))
}

#[derive(Deserialize)]
struct RatingRequest {
    rater_id: String,
    video_id: String,
    semantic_accuracy: i64,
    spatial_coherence: i64,
    temporal_consistency: i64,
}

async fn submit(
    State(store): Shared,
    body: Result<Json<RatingRequest>, JsonRejection>,
) -> Result<Json<StoredRating>, ApiError> {
    let Json(req) = body.map_err(|e| ApiError {
        status: StatusCode::BAD_REQUEST,
        code: "INVALID_REQUEST",
        message: e.body_text(),
    })?;
    let axes = [req.semantic_accuracy, req.spatial_coherence, req.temporal_consistency];
    let stored =
        tokio::task::spawn_blocking(move || store.submit(&req.rater_id, &req.video_id, axes))
            .await??;
    Ok(Json(stored))
}

async fn aggregates(State(store): Shared) -> Json<Value> {
    Json(json!({
        "dataset_id": store.manifest().dataset_id,
        "aggregates": store.aggregates(),
    }))
}

async fn export(State(store): Shared) -> impl IntoResponse {
    (
        [(header::CONTENT_TYPE, "text/csv; charset=utf-8")],
        store.export_human_scores(),
    )
}

async fn media(
    State(store): Shared,
    Path((video_id, side)): Path<(String, String)>,
    req: Request,
) -> Result<Response, ApiError> {
    let side: MediaSide = side.parse()?;
    let file = tokio::task::spawn_blocking(move || store.media_file(&video_id, side)).await??;
    // ServeFile answers Range requests with 206 partial content
    let res = ServeFile::new(file)
        .oneshot(req)
        .await
        .unwrap_or_else(|never| match never {});
    Ok(res.map(Body::new))
}

async fn no_ui() -> Html<&'static str> {
    Html(
        "<!doctype html><title>rating service</title>\
         <p>No annotation UI bundle configured. The JSON API lives under <code>/api</code>.</p>",
    )
}
