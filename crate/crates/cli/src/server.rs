//! HTTP JSON service over frozen artifacts.
//!
//! The listener comes up before artifacts finish loading; until then
//! `/api/health` reports `ready: false` and `/api/recommend` answers 503.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use physrec_core::recommend::{Artifacts, FieldError, RecommendRequest, ServiceDefaults};

pub struct AppState {
    artifacts: OnceLock<Arc<Artifacts>>,
    pub defaults: ServiceDefaults,
}

impl AppState {
    pub fn new(defaults: ServiceDefaults) -> Self {
        Self {
            artifacts: OnceLock::new(),
            defaults,
        }
    }

    pub fn loaded(artifacts: Artifacts, defaults: ServiceDefaults) -> Self {
        let s = Self::new(defaults);
        s.install(artifacts);
        s
    }

    /// First install wins; artifacts are never replaced while serving.
    pub fn install(&self, artifacts: Artifacts) -> bool {
        self.artifacts.set(Arc::new(artifacts)).is_ok()
    }

    pub fn artifacts(&self) -> Option<Arc<Artifacts>> {
        self.artifacts.get().cloned()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/recommend", post(recommend))
        .route("/api/health", get(health))
        .route("/api/config", get(config))
        .with_state(state)
}

fn json_bytes(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn bad_request(fields: Vec<FieldError>) -> Response {
    let body = json!({ "error": "invalid request", "fields": fields });
    (StatusCode::BAD_REQUEST, Json(body)).into_response()
}

async fn recommend(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: RecommendRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            return bad_request(vec![FieldError {
                field: "body".into(),
                message: e.to_string(),
            }])
        }
    };
    let fields = req.violations();
    if !fields.is_empty() {
        return bad_request(fields);
    }
    let Some(artifacts) = state.artifacts() else {
        let body = json!({ "error": "artifacts not loaded" });
        return (StatusCode::SERVICE_UNAVAILABLE, Json(body)).into_response();
    };
    let defaults = state.defaults.clone();
    let result = tokio::task::spawn_blocking(move || artifacts.recommend(&req, &defaults)).await;
    match result {
        Ok(Ok(resp)) => match serde_json::to_vec(&resp) {
            Ok(bytes) => json_bytes(StatusCode::OK, bytes),
            Err(e) => internal(e.to_string()),
        },
        Ok(Err(e)) => internal(e.to_string()),
        Err(e) => internal(e.to_string()),
    }
}

fn internal(message: String) -> Response {
    (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": message }))).into_response()
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    let body = match state.artifacts() {
        None => json!({ "ready": false }),
        Some(a) => json!({
            "ready": true,
            "products": a.dataset.products.len(),
            "users": a.dataset.users.len(),
            "foods": a.dataset.foods.len(),
            "checkpoint_hash": a.checkpoint_hash,
        }),
    };
    Json(body).into_response()
}

async fn config(State(state): State<Arc<AppState>>) -> Response {
    Json(state.defaults.document()).into_response()
}

/// Binds, starts loading artifacts in the background and serves forever.
pub async fn serve(
    port: u16,
    data: PathBuf,
    graph: PathBuf,
    checkpoint: PathBuf,
    defaults: ServiceDefaults,
) -> anyhow::Result<()> {
    let state = Arc::new(AppState::new(defaults));
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{addr}");

    let loader = state.clone();
    tokio::task::spawn_blocking(move || match Artifacts::load(&data, &graph, &checkpoint) {
        Ok(a) => {
            eprintln!("artifacts loaded: {} products", a.dataset.products.len());
            loader.install(a);
        }
        Err(e) => eprintln!("error: loading artifacts: {e}"),
    });

    axum::serve(listener, router(state)).await?;
    Ok(())
}
