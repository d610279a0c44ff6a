//! HTTP/JSON API for interactive segmentation sessions: upload an image,
//! add foreground/background scribbles (output clamps), and recompute the
//! clamped posterior marginals by Gibbs sampling. Schemas: `docs/api.md`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::data::{read_pnm, write_pnm, ImageDataset};
use crate::evaluate::{deterministic_marginals, Decision};
use crate::inference::{ClampSet, GibbsConfig, InferenceError, MarginalField};
use crate::model::Network;
use crate::rng::RngStream;
use crate::segment::{image_ppm, label_event, segment_image};

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceSettings {
    pub gibbs: GibbsConfig,
    /// Ancestral samples used when a session has no clamps.
    pub preview_samples: usize,
    pub seed: u64,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self {
            gibbs: GibbsConfig {
                burn_in: 200,
                sweeps: 2000,
                thinning: 1,
            },
            preview_samples: 1000,
            seed: 0,
        }
    }
}

struct Session {
    image: Vec<f64>,
    clamp: ClampSet,
    revision: u64,
    latest: Marginals,
}

/// Shared server state: the model, optional image dataset and all sessions.
pub struct AppState {
    model: Option<Arc<Network>>,
    dataset: Option<ImageDataset>,
    settings: ServiceSettings,
    sessions: Mutex<HashMap<u64, Arc<tokio::sync::Mutex<Session>>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(model: Option<Network>, dataset: Option<ImageDataset>, settings: ServiceSettings) -> Arc<Self> {
        Arc::new(Self {
            model: model.map(Arc::new),
            dataset,
            settings,
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    fn session(&self, id: &str) -> Result<Arc<tokio::sync::Mutex<Session>>, ApiError> {
        let missing = || ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id}"));
        let id: u64 = id.parse().map_err(|_| missing())?;
        self.sessions
            .lock()
            .expect("session map poisoned")
            .get(&id)
            .cloned()
            .ok_or_else(missing)
    }

    fn grid(&self) -> Result<(Arc<Network>, usize, usize), ApiError> {
        let net = self
            .model
            .clone()
            .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no_model", "no model loaded"))?;
        let grid = net.spec().output().grid.ok_or_else(|| {
            ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no_model", "loaded model has no output grid")
        })?;
        Ok((net, grid.height, grid.width))
    }
}

/// JSON error body `{code, message}` with an HTTP status.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<InferenceError> for ApiError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::NonErgodic { .. } => ApiError::new(StatusCode::CONFLICT, "non_ergodic", e.to_string()),
            InferenceError::IllegalClamp { .. } => ApiError::bad_request(e.to_string()),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "inference_failed", other.to_string()),
        }
    }
}

#[derive(Deserialize, Serialize, Debug, Clone, PartialEq, Default)]
pub struct CreateSession {
    /// Base64-encoded binary PPM (P6).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_ppm: Option<String>,
    /// Index into the server's image dataset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_index: Option<usize>,
}

/// A marginal field with the revision it was computed for.
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct Marginals {
    pub revision: u64,
    pub height: usize,
    pub width: usize,
    /// Row-major `p(foreground)` per pixel.
    pub marginals: Vec<f64>,
    /// `deterministic`, `ancestral` or `gibbs`.
    pub method: String,
    pub samples: u64,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct SessionCreated {
    pub id: u64,
    pub preview_ppm: String,
    #[serde(flatten)]
    pub marginals: Marginals,
}

#[derive(Deserialize, Serialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Fg,
    Bg,
    Erase,
}

#[derive(Deserialize, Serialize, Debug, Clone, Copy, PartialEq)]
pub struct Scribble {
    pub x: i64,
    pub y: i64,
    pub label: Label,
}

#[derive(Deserialize, Serialize, Debug, Clone, PartialEq)]
pub struct ScribbleRequest {
    pub scribbles: Vec<Scribble>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct ScribbleResponse {
    pub revision: u64,
    pub clamped: usize,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct SessionMarginals {
    /// Current revision of the session; `revision` below may lag behind it.
    pub current_revision: u64,
    #[serde(flatten)]
    pub marginals: Marginals,
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn to_response(field: &MarginalField, revision: u64, height: usize, width: usize, method: &str) -> Marginals {
    Marginals {
        revision,
        height,
        width,
        marginals: field.outputs.clone(),
        method: method.to_string(),
        samples: field.samples,
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "model_loaded": state.model.is_some() }))
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<SessionCreated>, ApiError> {
    let req: CreateSession = parse_json(&body)?;
    let (net, height, width) = state.grid()?;
    let image = match (&req.image_ppm, req.dataset_index) {
        (Some(b64), None) => {
            let bytes = B64
                .decode(b64.as_bytes())
                .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_image", format!("invalid base64: {e}")))?;
            let img = read_pnm(&bytes).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_image", e.to_string()))?;
            if (img.height, img.width) != (height, width) {
                return Err(ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "dimension_mismatch",
                    format!("image is {}x{}, model expects {height}x{width}", img.height, img.width),
                ));
            }
            img.to_unit_rgb()
        }
        (None, Some(i)) => {
            let data = state
                .dataset
                .as_ref()
                .ok_or_else(|| ApiError::bad_request("server has no image dataset"))?;
            let ex = data
                .examples
                .get(i)
                .ok_or_else(|| ApiError::bad_request(format!("dataset index {i} out of range ({} images)", data.len())))?;
            ex.image.clone()
        }
        _ => return Err(ApiError::bad_request("give exactly one of image_ppm, dataset_index")),
    };
    if image.len() != net.input_count() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "dimension_mismatch",
            format!("image has {} values, model expects {}", image.len(), net.input_count()),
        ));
    }
    let field = deterministic_marginals(&net, &image).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let latest = to_response(&field, 0, height, width, "deterministic");
    let id = state.next_id.fetch_add(1, Ordering::Relaxed);
    let preview_ppm = B64.encode(write_pnm(&image_ppm(&image, height, width)));
    let session = Session {
        image,
        clamp: ClampSet::new(net.output_count()),
        revision: 0,
        latest: latest.clone(),
    };
    state
        .sessions
        .lock()
        .expect("session map poisoned")
        .insert(id, Arc::new(tokio::sync::Mutex::new(session)));
    Ok(Json(SessionCreated {
        id,
        preview_ppm,
        marginals: latest,
    }))
}

async fn apply_scribbles(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<ScribbleResponse>, ApiError> {
    let session = state.session(&id)?;
    let req: ScribbleRequest = parse_json(&body)?;
    let (net, height, width) = state.grid()?;
    let kind = net.spec().output().kind;
    for s in &req.scribbles {
        if s.x < 0 || s.y < 0 || s.x as usize >= width || s.y as usize >= height {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "out_of_bounds",
                format!("pixel ({}, {}) outside {width}x{height} image", s.x, s.y),
            ));
        }
    }
    let mut s = session.lock().await;
    for sc in &req.scribbles {
        let p = sc.y as usize * width + sc.x as usize;
        match sc.label {
            Label::Fg => s.clamp.set(p, label_event(kind, true)),
            Label::Bg => s.clamp.set(p, label_event(kind, false)),
            Label::Erase => {
                s.clamp.clear(p);
            }
        }
    }
    s.revision += 1;
    Ok(Json(ScribbleResponse {
        revision: s.revision,
        clamped: s.clamp.len(),
    }))
}

async fn recompute(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Marginals>, ApiError> {
    let session = state.session(&id)?;
    let (net, height, width) = state.grid()?;
    // Held across the computation: one in-flight recompute per session.
    let mut s = session.lock().await;
    let cached = s.latest.revision == s.revision && s.latest.method != "deterministic";
    if cached {
        return Ok(Json(s.latest.clone()));
    }
    let (image, clamp, revision) = (s.image.clone(), s.clamp.clone(), s.revision);
    let settings = state.settings.clone();
    let method = if clamp.is_empty() { "ancestral" } else { "gibbs" };
    let field = tokio::task::spawn_blocking(move || {
        segment_image(
            &net,
            &image,
            Some(&clamp),
            Decision::Sampled {
                samples: settings.preview_samples,
            },
            settings.gibbs,
            &mut RngStream::new(settings.seed),
        )
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    s.latest = to_response(&field, revision, height, width, method);
    Ok(Json(s.latest.clone()))
}

async fn marginals(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionMarginals>, ApiError> {
    let session = state.session(&id)?;
    let s = session.lock().await;
    Ok(Json(SessionMarginals {
        current_revision: s.revision,
        marginals: s.latest.clone(),
    }))
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/scribbles", post(apply_scribbles))
        .route("/sessions/{id}/recompute", post(recompute))
        .route("/sessions/{id}/marginals", get(marginals))
        .fallback(fallback)
        .with_state(state)
}

/// Serves until the process receives Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
