//! HTTP API for interactive segmentation sessions.
//!
//! | method | path                     | body / result                          |
//! |--------|--------------------------|----------------------------------------|
//! | POST   | `/images`                | PNG or JPEG bytes, `201 {id, ...}`     |
//! | POST   | `/sessions/{id}/segment` | [`SegmentRequest`], [`SegmentResponse`] |
//! | GET    | `/sessions/{id}`         | [`SessionView`]                        |
//! | GET    | `/healthz`               | `ok`                                   |
//! | GET    | `/spec`                  | OpenAPI document                       |
//!
//! Masks travel as row-major run lengths starting with a background run.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use simsam_core::pipeline::{self, Aggregation, ClickSource, PipelineConfig};
use simsam_core::{rle, BinaryMask, BoundingBox, ClickLabel, ClickPrompt, ImageEmbedding, Segmenter, SegmenterPrompt};
use tower_http::cors::CorsLayer;

use crate::backend::Backend;
use crate::clock::SystemClock;
use crate::io;
use crate::segment::{label_name, TimingRecord};

pub const DEFAULT_MAX_SIDE: u32 = 4096;
pub const DEFAULT_CAPACITY: usize = 64;
/// Upload size limit in bytes.
pub const DEFAULT_BODY_LIMIT: usize = 64 << 20;

#[derive(Debug, Clone, Copy)]
pub struct ServiceConfig {
    /// Largest accepted image height or width.
    pub max_side: u32,
    /// Sessions kept before the least recently used is evicted.
    pub capacity: usize,
    pub body_limit: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { max_side: DEFAULT_MAX_SIDE, capacity: DEFAULT_CAPACITY, body_limit: DEFAULT_BODY_LIMIT }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no session `{id}`"))
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireBox {
    pub row_min: usize,
    pub col_min: usize,
    pub row_max: usize,
    pub col_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireLabel {
    Positive,
    Negative,
}

impl From<WireLabel> for ClickLabel {
    fn from(l: WireLabel) -> Self {
        match l {
            WireLabel::Positive => ClickLabel::Positive,
            WireLabel::Negative => ClickLabel::Negative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireClick {
    pub row: usize,
    pub col: usize,
    pub label: WireLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireAggregation {
    #[default]
    Medoid,
    PixelMean,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireClickSource {
    #[default]
    Topk,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRequest {
    #[serde(rename = "box")]
    pub bbox: WireBox,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub aggregation: WireAggregation,
    #[serde(default)]
    pub clicks: WireClickSource,
    /// Seed of the random click source.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Added to the box in every decode, the simulated click included.
    #[serde(default)]
    pub user_clicks: Vec<WireClick>,
}

fn default_k() -> usize {
    pipeline::DEFAULT_K
}

fn default_threshold() -> f64 {
    pipeline::DEFAULT_THRESHOLD
}

impl SegmentRequest {
    fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            k: self.k,
            click_source: match self.clicks {
                WireClickSource::Topk => ClickSource::TopK,
                WireClickSource::Random => ClickSource::Random { seed: self.seed },
            },
            aggregation: match self.aggregation {
                WireAggregation::Medoid => Aggregation::Medoid,
                WireAggregation::PixelMean => Aggregation::PixelMean,
                WireAggregation::None => Aggregation::None,
            },
            threshold: self.threshold,
        }
    }

    fn prompt(&self) -> ApiResult<SegmenterPrompt> {
        let b = self.bbox;
        let bbox = BoundingBox::new(b.row_min, b.col_min, b.row_max, b.col_max)
            .map_err(|e| ApiError::unprocessable(e.to_string()))?;
        Ok(SegmenterPrompt {
            bbox: Some(bbox),
            clicks: self.user_clicks.iter().map(|c| ClickPrompt::new(c.row, c.col, c.label.into())).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMask {
    pub height: usize,
    pub width: usize,
    pub rle: Vec<u32>,
}

impl From<&BinaryMask> for WireMask {
    fn from(m: &BinaryMask) -> Self {
        Self { height: m.shape().height(), width: m.shape().width(), rle: rle::encode(m) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireCandidate {
    pub index: usize,
    pub row: usize,
    pub col: usize,
    pub label: String,
    /// Mean IoU to every candidate; absent for pixel-mean aggregation.
    pub score: Option<f64>,
    pub mask: WireMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    /// Encodes of this session's image; always 1.
    pub encodes: u64,
    /// Decodes made by this request.
    pub decodes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireTiming {
    pub baseline_decode: f64,
    pub candidate_decode: f64,
    pub aggregation: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub session_id: String,
    pub final_mask: WireMask,
    pub union: WireMask,
    pub medoid_index: Option<usize>,
    pub candidates: Vec<WireCandidate>,
    pub counters: Counters,
    pub timing_ms: WireTiming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryItem {
    pub request: SegmentRequest,
    pub final_foreground: usize,
    pub union_foreground: usize,
    pub candidates: usize,
    pub medoid_index: Option<usize>,
    pub decodes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub height: usize,
    pub width: usize,
    pub backend: String,
    pub encodes: u64,
    pub history: Vec<HistoryItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub id: String,
    pub height: usize,
    pub width: usize,
    pub backend: String,
}

struct Session {
    id: String,
    segmenter: Arc<dyn Segmenter>,
    embedding: ImageEmbedding,
    /// Held for the whole of a segment call so decode counts stay per request.
    history: Mutex<Vec<HistoryItem>>,
}

struct AppState {
    backend: Backend,
    config: ServiceConfig,
    sessions: Mutex<IndexMap<String, Arc<Session>>>,
}

impl AppState {
    fn session(&self, id: &str) -> ApiResult<Arc<Session>> {
        let mut map = self.sessions.lock().expect("session map poisoned");
        let idx = map.get_index_of(id).ok_or_else(|| ApiError::not_found(id))?;
        let last = map.len() - 1;
        map.move_index(idx, last);
        Ok(map[last].clone())
    }

    fn insert(&self, s: Arc<Session>) {
        let mut map = self.sessions.lock().expect("session map poisoned");
        map.insert(s.id.clone(), s);
        while map.len() > self.config.capacity {
            if let Some((id, _)) = map.shift_remove_index(0) {
                log::debug!("evicted session {id}");
            }
        }
    }
}

pub fn router(backend: Backend, config: ServiceConfig) -> Router {
    let state = Arc::new(AppState { backend, config, sessions: Mutex::new(IndexMap::new()) });
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/spec", get(|| async { Json(openapi()) }))
        .route("/images", post(post_image))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/segment", post(post_segment))
        .layer(DefaultBodyLimit::max(config.body_limit))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

async fn post_image(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<CreatedSession>)> {
    let unsupported =
        |e: image::ImageError| ApiError::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, format!("not a decodable image: {e}"));
    let (w, h) = io::probe_dimensions(&body).map_err(unsupported)?;
    let max = state.config.max_side;
    if w > max || h > max {
        return Err(ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, format!("{h}x{w} exceeds the {max}x{max} limit")));
    }
    let st = state.clone();
    let session = tokio::task::spawn_blocking(move || -> ApiResult<Session> {
        let grid = io::grid_from_dynamic(io::decode_image(&body).map_err(unsupported)?)
            .map_err(|e| ApiError::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, e.to_string()))?;
        let segmenter = st.backend.segmenter();
        let embedding = segmenter.encode(&grid).map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(Session { id: uuid::Uuid::new_v4().to_string(), segmenter, embedding, history: Mutex::new(Vec::new()) })
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    let created = CreatedSession {
        id: session.id.clone(),
        height: session.embedding.shape().height(),
        width: session.embedding.shape().width(),
        backend: state.backend.id().to_string(),
    };
    state.insert(Arc::new(session));
    Ok((StatusCode::CREATED, Json(created)))
}

async fn post_segment(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<SegmentResponse>> {
    let session = state.session(&id)?;
    let req: SegmentRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::unprocessable(format!("invalid request: {e}")))?;
    let prompt = req.prompt()?;
    prompt.validate(session.embedding.shape()).map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let cfg = req.pipeline_config();
    cfg.validate().map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let resp = tokio::task::spawn_blocking(move || segment(&session, req, &prompt, &cfg))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(resp))
}

fn segment(
    session: &Session,
    req: SegmentRequest,
    prompt: &SegmenterPrompt,
    cfg: &PipelineConfig,
) -> ApiResult<SegmentResponse> {
    let mut history = session.history.lock().expect("session history poisoned");
    let (_, before) = session.embedding.call_counts();
    let out =
        pipeline::run_with_embedding(session.segmenter.as_ref(), &session.embedding, prompt, cfg, &SystemClock::new())
            .map_err(|e| match e {
                simsam_core::Error::Backend(_) => ApiError::internal(e.to_string()),
                _ => ApiError::unprocessable(e.to_string()),
            })?;
    let (encodes, after) = session.embedding.call_counts();
    let scores = out.medoid.as_ref().map(|m| &m.scores);
    let candidates = out
        .candidates
        .clicks()
        .iter()
        .zip(out.candidates.bin_masks())
        .enumerate()
        .map(|(i, (c, m))| WireCandidate {
            index: i,
            row: c.row,
            col: c.col,
            label: label_name(c.label).to_string(),
            score: scores.map(|s| s[i]),
            mask: m.into(),
        })
        .collect::<Vec<_>>();
    let timing = TimingRecord::from(out.timing);
    let resp = SegmentResponse {
        session_id: session.id.clone(),
        final_mask: (&out.final_mask).into(),
        union: (&out.union).into(),
        medoid_index: out.medoid.as_ref().map(|m| m.index),
        candidates,
        counters: Counters { encodes, decodes: after - before },
        timing_ms: WireTiming {
            baseline_decode: timing.baseline_decode,
            candidate_decode: timing.candidate_decode,
            aggregation: timing.aggregation,
            total: timing.total,
        },
    };
    history.push(HistoryItem {
        request: req,
        final_foreground: out.final_mask.count(),
        union_foreground: out.union.count(),
        candidates: out.candidates.len(),
        medoid_index: resp.medoid_index,
        decodes: resp.counters.decodes,
    });
    Ok(resp)
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let s = state.session(&id)?;
    let history = s.history.lock().expect("session history poisoned").clone();
    Ok(Json(SessionView {
        id: s.id.clone(),
        height: s.embedding.shape().height(),
        width: s.embedding.shape().width(),
        backend: s.embedding.backend().to_string(),
        encodes: s.embedding.call_counts().0,
        history,
    }))
}

/// `serve`: runs until Ctrl-C.
pub async fn cmd_serve(addr: SocketAddr, backend: Backend, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(backend, config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

pub fn openapi() -> serde_json::Value {
    use serde_json::json;
    let mask = json!({
        "type": "object",
        "required": ["height", "width", "rle"],
        "properties": {
            "height": {"type": "integer"},
            "width": {"type": "integer"},
            "rle": {"type": "array", "items": {"type": "integer"},
                    "description": "Row-major run lengths, starting with a (possibly empty) background run."}
        }
    });
    let error = json!({"type": "object", "properties": {"error": {"type": "string"}}});
    let err = |d: &str| json!({"description": d, "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Error"}}}});
    json!({
        "openapi": "3.0.3",
        "info": {"title": "simsam", "version": env!("CARGO_PKG_VERSION")},
        "paths": {
            "/healthz": {"get": {"responses": {"200": {"description": "ok", "content": {"text/plain": {}}}}}},
            "/images": {"post": {
                "requestBody": {"required": true, "content": {"image/png": {}, "image/jpeg": {}}},
                "responses": {
                    "201": {"description": "session created", "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Created"}}}},
                    "413": err("image too large"),
                    "415": err("undecodable image")
                }
            }},
            "/sessions/{id}": {"get": {
                "parameters": [{"name": "id", "in": "path", "required": true, "schema": {"type": "string"}}],
                "responses": {
                    "200": {"description": "session history", "content": {"application/json": {"schema": {"$ref": "#/components/schemas/Session"}}}},
                    "404": err("unknown session")
                }
            }},
            "/sessions/{id}/segment": {"post": {
                "parameters": [{"name": "id", "in": "path", "required": true, "schema": {"type": "string"}}],
                "requestBody": {"required": true, "content": {"application/json": {"schema": {"$ref": "#/components/schemas/SegmentRequest"}}}},
                "responses": {
                    "200": {"description": "segmentation", "content": {"application/json": {"schema": {"$ref": "#/components/schemas/SegmentResponse"}}}},
                    "404": err("unknown session"),
                    "422": err("invalid box, clicks or options")
                }
            }}
        },
        "components": {"schemas": {
            "Error": error,
            "Mask": mask,
            "Created": {"type": "object", "properties": {
                "id": {"type": "string"}, "height": {"type": "integer"}, "width": {"type": "integer"}, "backend": {"type": "string"}}},
            "Click": {"type": "object", "required": ["row", "col", "label"], "properties": {
                "row": {"type": "integer"}, "col": {"type": "integer"},
                "label": {"type": "string", "enum": ["positive", "negative"]}}},
            "SegmentRequest": {"type": "object", "required": ["box"], "properties": {
                "box": {"type": "object", "required": ["row_min", "col_min", "row_max", "col_max"], "properties": {
                    "row_min": {"type": "integer"}, "col_min": {"type": "integer"},
                    "row_max": {"type": "integer"}, "col_max": {"type": "integer"}}},
                "k": {"type": "integer", "minimum": 1, "default": 50},
                "aggregation": {"type": "string", "enum": ["medoid", "pixel_mean", "none"], "default": "medoid"},
                "clicks": {"type": "string", "enum": ["topk", "random"], "default": "topk"},
                "seed": {"type": "integer", "default": 0},
                "threshold": {"type": "number", "default": 0.5},
                "user_clicks": {"type": "array", "items": {"$ref": "#/components/schemas/Click"}}}},
            "SegmentResponse": {"type": "object", "properties": {
                "session_id": {"type": "string"},
                "final_mask": {"$ref": "#/components/schemas/Mask"},
                "union": {"$ref": "#/components/schemas/Mask"},
                "medoid_index": {"type": "integer", "nullable": true},
                "candidates": {"type": "array", "items": {"type": "object", "properties": {
                    "index": {"type": "integer"}, "row": {"type": "integer"}, "col": {"type": "integer"},
                    "label": {"type": "string"}, "score": {"type": "number", "nullable": true},
                    "mask": {"$ref": "#/components/schemas/Mask"}}}},
                "counters": {"type": "object", "properties": {"encodes": {"type": "integer"}, "decodes": {"type": "integer"}}},
                "timing_ms": {"type": "object", "properties": {
                    "baseline_decode": {"type": "number"}, "candidate_decode": {"type": "number"},
                    "aggregation": {"type": "number"}, "total": {"type": "number"}}}}},
            "Session": {"type": "object", "properties": {
                "id": {"type": "string"}, "height": {"type": "integer"}, "width": {"type": "integer"},
                "backend": {"type": "string"}, "encodes": {"type": "integer"},
                "history": {"type": "array", "items": {"type": "object"}}}}
        }}
    })
}
