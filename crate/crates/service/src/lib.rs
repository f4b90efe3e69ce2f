//! HTTP service for interactive mapping sessions.
//!
//! A session holds a hidden truth phantom and one trained model. Clients add
//! points one at a time (the server projects each request onto the truth
//! surface) and poll for reconstructions. Everything lives under `/v1`:
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/v1/health` | liveness |
//! | GET | `/v1/models` | loaded models |
//! | POST | `/v1/sessions` | create a session |
//! | GET | `/v1/sessions/{id}` | revision and point list |
//! | DELETE | `/v1/sessions/{id}` | drop a session |
//! | POST | `/v1/sessions/{id}/points` | acquire a point |
//! | GET | `/v1/sessions/{id}/reconstruction?samples=N&rev=R&seed=S` | meshes, per-vertex std and score |
//!
//! Reconstructions are JSON by default and binary STL of the mean surface
//! when the request accepts `model/stl`.

pub mod api;
mod error;
mod session;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use atriamap_core::volume::{save_volume, synth_phantom, PhantomSpec, VoxelGrid};
use atriamap_core::TrainedModel;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tower_http::services::ServeDir;

pub use error::ApiError;
pub use session::{trilinear, Lookup, Rendered, Session, Snapshot, MIN_POINTS};

use api::{AcquireRequest, CreateSession, ModelInfo};

pub const DEFAULT_SAMPLES: usize = 50;
pub const MAX_SAMPLES: usize = 1000;
pub const STL_MEDIA_TYPE: &str = "model/stl";

/// Service-wide state: the model registry and live sessions.
pub struct AppState {
    models: BTreeMap<String, Arc<TrainedModel>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(models: BTreeMap<String, TrainedModel>) -> Self {
        Self {
            models: models.into_iter().map(|(k, v)| (k, Arc::new(v))).collect(),
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    pub fn models(&self) -> Vec<ModelInfo> {
        self.models.iter().map(|(id, m)| ModelInfo { id: id.clone(), kind: m.kind(), dims: m.dims() }).collect()
    }

    pub fn create_session(&self, request: &CreateSession) -> Result<Arc<Mutex<Session>>, ApiError> {
        let model = self.models.get(&request.model).ok_or_else(|| ApiError::ModelNotFound(request.model.clone()))?;
        let truth = match (&request.phantom_seed, &request.volume) {
            (Some(_), Some(_)) => return Err(ApiError::BadRequest("give phantom_seed or volume, not both".into())),
            (_, Some(v)) => {
                if v.values.iter().any(|&b| b > 1) {
                    return Err(ApiError::BadRequest("volume values must be 0 or 1".into()));
                }
                VoxelGrid::binary(v.dims, v.spacing, v.values.iter().map(|&b| f32::from(b)).collect())
                    .map_err(|e| ApiError::BadRequest(e.to_string()))?
            }
            (seed, None) => synth_phantom(&PhantomSpec::with_seed(seed.unwrap_or(0)), model.dims())
                .map_err(|e| ApiError::BadRequest(e.to_string()))?,
        };
        let id = format!("s{:06}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let session = Arc::new(Mutex::new(Session::new(id.clone(), request.model.clone(), model.clone(), truth)?));
        self.sessions.write().expect("session map lock").insert(id, session.clone());
        Ok(session)
    }

    pub fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions.read().expect("session map lock").get(id).cloned().ok_or_else(|| ApiError::SessionNotFound(id.into()))
    }

    pub fn delete_session(&self, id: &str) -> Result<(), ApiError> {
        self.sessions.write().expect("session map lock").remove(id).map(|_| ()).ok_or_else(|| ApiError::SessionNotFound(id.into()))
    }

    /// Writes every session to `dir/<id>/`: the truth as `truth.avx` and the
    /// descriptor plus points as `session.json`.
    pub fn snapshot_to(&self, dir: &Path) -> std::io::Result<usize> {
        let sessions: Vec<_> = self.sessions.read().expect("session map lock").values().cloned().collect();
        for s in &sessions {
            let s = s.lock().expect("session lock");
            let out = dir.join(s.id());
            std::fs::create_dir_all(&out)?;
            save_volume(s.truth(), out.join("truth.avx")).map_err(std::io::Error::other)?;
            let json = serde_json::to_string_pretty(&s.state()).map_err(std::io::Error::other)?;
            std::fs::write(out.join("session.json"), json + "\n")?;
        }
        Ok(sessions.len())
    }
}

/// Router over `state`, serving static files from `static_dir` for any
/// path outside `/v1`.
pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(|| async { Json(serde_json::json!({ "status": "ok" })) }))
        .route("/models", get(list_models))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/points", post(acquire))
        .route("/sessions/{id}/reconstruction", get(reconstruction));
    let app = Router::new().nest("/v1", api).with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

async fn list_models(State(state): State<Arc<AppState>>) -> Json<Vec<ModelInfo>> {
    Json(state.models())
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Result<Json<CreateSession>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(request) = body.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let session = state.create_session(&request)?;
    let descriptor = session.lock().expect("session lock").descriptor();
    Ok((StatusCode::CREATED, Json(descriptor)).into_response())
}

async fn get_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let body = session.lock().expect("session lock").state();
    Ok(Json(body).into_response())
}

async fn delete_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<StatusCode, ApiError> {
    state.delete_session(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn acquire(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<AcquireRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(request) = body.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let session = state.session(&id)?;
    let reply = session.lock().expect("session lock").acquire(request.position, request.idempotency_key.as_deref())?;
    Ok(Json(reply).into_response())
}

#[derive(Debug, Deserialize)]
struct ReconstructionQuery {
    samples: Option<usize>,
    rev: Option<u64>,
    seed: Option<u64>,
}

async fn reconstruction(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    query: Result<Query<ReconstructionQuery>, axum::extract::rejection::QueryRejection>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let samples = q.samples.unwrap_or(DEFAULT_SAMPLES);
    if samples == 0 || samples > MAX_SAMPLES {
        return Err(ApiError::BadRequest(format!("samples must be in 1..={MAX_SAMPLES}")));
    }
    let seed = q.seed.unwrap_or(0);
    let session = state.session(&id)?;
    let lookup = session.lock().expect("session lock").lookup(samples, seed, q.rev)?;
    let rendered = match lookup {
        Lookup::Cached(hit) => hit,
        Lookup::Compute(snapshot) => {
            let revision = snapshot.revision();
            let rendered = tokio::task::spawn_blocking(move || snapshot.render(samples, seed))
                .await
                .map_err(|e| ApiError::Internal(e.to_string()))??;
            let rendered = Arc::new(rendered);
            session.lock().expect("session lock").store(samples, seed, revision, rendered.clone());
            rendered
        }
    };
    let wants_stl = headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|accept| accept.split(',').any(|t| t.trim().starts_with(STL_MEDIA_TYPE)));
    match (&rendered.mean_mesh, wants_stl) {
        (Some(mesh), true) => {
            let mut bytes = Vec::new();
            mesh.write_stl(&mut bytes).map_err(|e| ApiError::Internal(e.to_string()))?;
            Ok(([(header::CONTENT_TYPE, STL_MEDIA_TYPE)], bytes).into_response())
        }
        _ => Ok(Json(rendered.response.clone()).into_response()),
    }
}
