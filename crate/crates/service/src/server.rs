//! HTTP routes.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;
use voxcast_core::blockgrid::{cull_empty, decompose, BlockStats, DEFAULT_BLOCK_SIZE, DEFAULT_OVERLAP};
use voxcast_core::classification::{build_lut, DEFAULT_LUT_BINS};
use voxcast_core::image::{encode_gray_png, window_level};
use voxcast_core::request::RequestError;
use voxcast_core::{RenderError, RenderRequest, TransferFunctionSpec, VolumeManifest, VolumeSource};

use crate::render_png;
use crate::store::{StoreError, VolumeStore, DEFAULT_CACHE_SIZE};
use crate::upload::{volume_from_dicom_files, volume_from_dicom_zip, volume_from_raw, UploadError};

pub const DEFAULT_UPLOAD_CAP: usize = 2 << 30;
pub const DEFAULT_QUEUE_BOUND: usize = 8;
pub const STATS_HEADER: &str = "x-render-stats";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
    pub data_dir: PathBuf,
    pub cache_size: usize,
    pub upload_cap: usize,
    /// Renders admitted at once, running or waiting; more get 503.
    pub queue_bound: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: PathBuf::from("voxcast-data"),
            cache_size: DEFAULT_CACHE_SIZE,
            upload_cap: DEFAULT_UPLOAD_CAP,
            queue_bound: DEFAULT_QUEUE_BOUND,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<VolumeStore>,
    queue: Arc<Semaphore>,
}

impl AppState {
    pub fn new(store: Arc<VolumeStore>, queue_bound: usize) -> Self {
        Self {
            store,
            queue: Arc::new(Semaphore::new(queue_bound)),
        }
    }

    pub fn store(&self) -> &Arc<VolumeStore> {
        &self.store
    }
}

/// JSON error body: `{"error": code, "message": ..., "field": ...}`.
#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    error: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'static str>,
}

impl ApiError {
    fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            error,
            message: message.into(),
            field: None,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::Ingest(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<UploadError> for ApiError {
    fn from(e: UploadError) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, e.code(), e.to_string())
    }
}

impl From<RequestError> for ApiError {
    fn from(e: RequestError) -> Self {
        let mut err = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e.to_string());
        if let RequestError::Render(RenderError::InvalidSettings { field, .. }) = e {
            err.field = Some(field);
        }
        err
    }
}

fn body_error(status: StatusCode, message: String) -> ApiError {
    if status == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(status, "PayloadTooLarge", message)
    } else {
        ApiError::new(StatusCode::BAD_REQUEST, "InvalidUpload", message)
    }
}

async fn blocking<R: Send + 'static>(f: impl FnOnce() -> R + Send + 'static) -> Result<R, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))
}

pub fn router(state: AppState, upload_cap: usize) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/volumes", get(list_volumes).post(upload_volume))
        .route("/volumes/{id}", get(volume_detail))
        .route("/volumes/{id}/render", post(render_volume))
        .route("/volumes/{id}/slices/{axis}/{index}", get(slice_png))
        .layer(DefaultBodyLimit::max(upload_cap))
        .with_state(state)
}

pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let store = VolumeStore::open(&config.data_dir, config.cache_size).map_err(std::io::Error::other)?;
    let app = router(AppState::new(Arc::new(store), config.queue_bound), config.upload_cap);
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn list_volumes(State(s): State<AppState>) -> Json<Vec<VolumeManifest>> {
    Json(s.store.list())
}

#[derive(Serialize)]
struct Created {
    id: String,
    manifest: VolumeManifest,
}

enum Payload {
    DicomZip(Bytes),
    DicomFiles(Vec<Bytes>),
    Raw { data: Bytes, manifest: Bytes },
}

async fn read_multipart(mut form: Multipart) -> Result<Payload, ApiError> {
    let (mut dicom, mut slices, mut raw, mut manifest) = (None, Vec::new(), None, None);
    loop {
        let field = match form.next_field().await {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => return Err(body_error(e.status(), e.body_text())),
        };
        let name = field.name().unwrap_or_default().to_string();
        let data = field.bytes().await.map_err(|e| body_error(e.status(), e.body_text()))?;
        match name.as_str() {
            "dicom" => dicom = Some(data),
            "slice" => slices.push(data),
            "raw" => raw = Some(data),
            "manifest" => manifest = Some(data),
            _ => {}
        }
    }
    match (dicom, raw, manifest) {
        (Some(zip), None, _) => Ok(Payload::DicomZip(zip)),
        (None, Some(data), Some(manifest)) => Ok(Payload::Raw { data, manifest }),
        (None, None, _) if !slices.is_empty() => Ok(Payload::DicomFiles(slices)),
        _ => Err(UploadError::MissingPart(
            "expected a `dicom` zip part, `slice` parts, or `raw` plus `manifest` parts".into(),
        )
        .into()),
    }
}

async fn upload_volume(State(s): State<AppState>, request: Request) -> Result<Response, ApiError> {
    let is_multipart = request
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let payload = if is_multipart {
        let form = Multipart::from_request(request, &())
            .await
            .map_err(|e| body_error(e.status(), e.body_text()))?;
        read_multipart(form).await?
    } else {
        let body = Bytes::from_request(request, &())
            .await
            .map_err(|e| body_error(e.status(), e.body_text()))?;
        Payload::DicomZip(body)
    };
    let store = s.store.clone();
    let manifest = blocking(move || -> Result<VolumeManifest, ApiError> {
        let (vol, source) = match payload {
            Payload::DicomZip(zip) => (volume_from_dicom_zip(&zip)?, VolumeSource::Dicom),
            Payload::DicomFiles(files) => (volume_from_dicom_files(&files)?, VolumeSource::Dicom),
            Payload::Raw { data, manifest } => (volume_from_raw(&data, &manifest)?, VolumeSource::Raw),
        };
        Ok(store.insert(vol, source)?)
    })
    .await??;
    let body = Created {
        id: manifest.id.clone(),
        manifest,
    };
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DetailQuery {
    preset: Option<String>,
    block_size: Option<usize>,
    overlap: Option<usize>,
}

#[derive(Serialize)]
struct Detail {
    manifest: VolumeManifest,
    preset: String,
    blocks: BlockStats,
}

/// Manifest plus the block decomposition, culled under a preset (bone by default).
async fn volume_detail(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<DetailQuery>,
) -> Result<Json<Detail>, ApiError> {
    let manifest = s.store.manifest(&id)?;
    let preset = q.preset.unwrap_or_else(|| "bone".into());
    let tf = TransferFunctionSpec::Preset(preset.clone())
        .resolve()
        .map_err(|e| ApiError::from(RequestError::from(e)))?;
    let store = s.store.clone();
    let blocks = blocking(move || -> Result<BlockStats, ApiError> {
        let vol = store.get(&id)?;
        let grid = decompose(
            &vol,
            q.block_size.unwrap_or(DEFAULT_BLOCK_SIZE),
            q.overlap.unwrap_or(DEFAULT_OVERLAP),
        )
        .map_err(|e| ApiError::from(RequestError::Render(e.into())))?;
        Ok(cull_empty(grid, &build_lut(&tf, DEFAULT_LUT_BINS)).stats())
    })
    .await??;
    Ok(Json(Detail {
        manifest,
        preset,
        blocks,
    }))
}

async fn render_volume(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    s.store.manifest(&id)?;
    let request: RenderRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "InvalidRequest", e.to_string()))?;
    request.validate()?;
    let permit = s.queue.clone().try_acquire_owned().map_err(|_| {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "QueueFull",
            "render queue is full, retry later",
        )
    })?;
    let store = s.store.clone();
    let (png, stats) = blocking(move || -> Result<_, ApiError> {
        let _permit = permit;
        let vol = store.get(&id)?;
        Ok(render_png(&request, &vol)?)
    })
    .await??;
    let stats = serde_json::to_string(&stats).expect("stats serialize");
    let mut response = ([(header::CONTENT_TYPE, HeaderValue::from_static("image/png"))], png).into_response();
    if let Ok(v) = HeaderValue::from_str(&stats) {
        response.headers_mut().insert(STATS_HEADER, v);
    }
    Ok(response)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowQuery {
    window: Option<f64>,
    level: Option<f64>,
}

/// Grayscale PNG of one axis-aligned slice; window/level default to the
/// volume's value range.
async fn slice_png(
    State(s): State<AppState>,
    Path((id, axis, index)): Path<(String, String, String)>,
    Query(q): Query<WindowQuery>,
) -> Result<Response, ApiError> {
    let manifest = s.store.manifest(&id)?;
    let unprocessable = |code, msg: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, msg);
    let axis = match axis.as_str() {
        "x" => 0,
        "y" => 1,
        "z" => 2,
        other => return Err(unprocessable("InvalidAxis", format!("axis {other:?} is not x, y or z"))),
    };
    let index: usize = index
        .parse()
        .map_err(|_| unprocessable("IndexOutOfRange", format!("index {index:?} is not a voxel index")))?;
    if index >= manifest.dims[axis] {
        return Err(unprocessable(
            "IndexOutOfRange",
            format!("index {index} outside 0..{}", manifest.dims[axis]),
        ));
    }
    let (lo, hi) = (f64::from(manifest.value_range.0), f64::from(manifest.value_range.1));
    let window = q.window.unwrap_or((hi - lo).max(1.0));
    let level = q.level.unwrap_or(0.5 * (lo + hi));
    if !(window > 0.0 && window.is_finite() && level.is_finite()) {
        return Err(unprocessable(
            "InvalidWindow",
            "window must be positive and finite".into(),
        ));
    }
    let store = s.store.clone();
    let png = blocking(move || -> Result<Vec<u8>, ApiError> {
        let vol = store.get(&id)?;
        let (w, h, values) = vol.slice(axis, index).expect("index checked");
        let gray: Vec<u8> = values
            .iter()
            .map(|&v| window_level(f64::from(v), window, level))
            .collect();
        Ok(encode_gray_png(w as u32, h as u32, &gray))
    })
    .await??;
    Ok(([(header::CONTENT_TYPE, HeaderValue::from_static("image/png"))], png).into_response())
}
