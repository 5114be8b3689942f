use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use topogen_core::sketch::TopoField;
use topogen_core::CoreError;
use topogen_models::inference::{fit_sketch, generate as run_generator};
use topogen_models::latent::{
    interpolate_terrains, sample_variants, CodeMode, InterpolationRequest, VariantRequest, DEFAULT_GAMMAS,
};
use topogen_models::{ModelError, Vae};

use crate::render::{decode_sketch, render};
use crate::{AppState, Models};

pub const MAX_VARIANTS: usize = 16;
pub const MAX_GAMMAS: usize = 64;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub sketch_png_b64: String,
    #[serde(default)]
    pub through_vae: bool,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VariantsRequest {
    pub sketch_png_b64: String,
    pub n: usize,
    #[serde(default = "unit_scale")]
    pub eps_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn unit_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InterpolateRequest {
    pub sketch_a_b64: String,
    pub sketch_b_b64: String,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
}

fn default_gammas() -> Vec<f64> {
    DEFAULT_GAMMAS.to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub h_min: f64,
    pub h_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub dem_png16_b64: String,
    pub sidecar: ValueRange,
    pub hillshade_png_b64: String,
    pub latency_ms: f64,
}

/// JSON error body `{"error": code, "detail": message}`.
#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub detail: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, detail: impl Into<String>) -> Self {
        Self {
            status,
            code,
            detail: detail.into(),
        }
    }

    pub fn bad_sketch(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_sketch_encoding", detail)
    }

    pub fn invalid(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", detail)
    }

    fn not_ready() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "not_ready", "checkpoints are still loading")
    }

    fn timeout(after: Duration) -> Self {
        Self::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "timeout",
            format!("no result within {} ms", after.as_millis()),
        )
    }

    fn internal(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", detail)
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        if e.is_input_error() {
            Self::invalid(e.to_string())
        } else {
            Self::internal(e.to_string())
        }
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        Self::internal(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.code, "detail": self.detail });
        (self.status, Json(body)).into_response()
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid(e.to_string()))
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Run `f` on the blocking pool against the loaded models, giving up after
/// the configured timeout.
async fn infer<T, F>(state: Arc<AppState>, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Models) -> Result<T, ApiError> + Send + 'static,
{
    if state.models().is_none() {
        return Err(ApiError::not_ready());
    }
    let timeout = state.timeout;
    let task = tokio::task::spawn_blocking(move || f(state.models().expect("checked above")));
    match tokio::time::timeout(timeout, task).await {
        Err(_) => Err(ApiError::timeout(timeout)),
        Ok(Err(join)) => Err(ApiError::internal(join.to_string())),
        Ok(Ok(result)) => result,
    }
}

fn need_vae(m: &Models) -> Result<&Vae, ApiError> {
    m.vae
        .as_ref()
        .ok_or_else(|| ApiError::invalid("this endpoint needs a VAE checkpoint, none is loaded"))
}

/// The sketch the VAE sees on the generate path: generator size first, then
/// VAE size.
fn vae_input(m: &Models, vae: &Vae, topo: &TopoField) -> TopoField {
    fit_sketch(&fit_sketch(topo, m.generator.config().input_px), vae.config().input_px)
}

fn render_all(m: &Models, fields: &[TopoField]) -> Result<Vec<GenerateResponse>, ApiError> {
    fields
        .iter()
        .map(|f| Ok(render(&run_generator(&m.generator, None, f)?)?))
        .collect()
}

fn stamp(mut list: Vec<GenerateResponse>, start: Instant) -> Vec<GenerateResponse> {
    let ms = elapsed_ms(start);
    for r in &mut list {
        r.latency_ms = ms;
    }
    list
}

#[derive(Debug, Serialize)]
struct Health<'a> {
    status: &'static str,
    checkpoints: &'a crate::CheckpointInfo,
}

pub(crate) async fn health(State(state): State<Arc<AppState>>) -> Response {
    let status = if state.models().is_some() { "ready" } else { "loading" };
    Json(Health {
        status,
        checkpoints: &state.checkpoints,
    })
    .into_response()
}

pub(crate) async fn generate(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Json<GenerateResponse>, ApiError> {
    let start = Instant::now();
    let req: GenerateRequest = parse(&body)?;
    let sketch = decode_sketch(&req.sketch_png_b64)?;
    let mut out = infer(state, move |m| {
        let vae = if req.through_vae { Some(need_vae(m)?) } else { None };
        Ok(render(&run_generator(&m.generator, vae, &sketch)?)?)
    })
    .await?;
    out.latency_ms = elapsed_ms(start);
    Ok(Json(out))
}

pub(crate) async fn variants(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Json<Vec<GenerateResponse>>, ApiError> {
    let start = Instant::now();
    let req: VariantsRequest = parse(&body)?;
    if !(1..=MAX_VARIANTS).contains(&req.n) {
        return Err(ApiError::invalid(format!("n must be in 1..={MAX_VARIANTS}, got {}", req.n)));
    }
    if !(req.eps_scale.is_finite() && req.eps_scale >= 0.0) {
        return Err(ApiError::invalid(format!("eps_scale must be >= 0, got {}", req.eps_scale)));
    }
    let sketch = decode_sketch(&req.sketch_png_b64)?;
    let out = infer(state, move |m| {
        let vae = need_vae(m)?;
        let fields = sample_variants(
            &VariantRequest {
                topo: vae_input(m, vae, &sketch),
                n_variants: req.n,
                eps_scale: req.eps_scale,
                seed: req.seed,
            },
            vae,
        )?;
        render_all(m, &fields)
    })
    .await?;
    Ok(Json(stamp(out, start)))
}

pub(crate) async fn interpolate(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Json<Vec<GenerateResponse>>, ApiError> {
    let start = Instant::now();
    let req: InterpolateRequest = parse(&body)?;
    if req.gammas.is_empty() || req.gammas.len() > MAX_GAMMAS {
        return Err(ApiError::invalid(format!("between 1 and {MAX_GAMMAS} gammas are accepted")));
    }
    if let Some(g) = req.gammas.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(ApiError::invalid(format!("gamma must lie in [0, 1], got {g}")));
    }
    let a = decode_sketch(&req.sketch_a_b64)?;
    let b = decode_sketch(&req.sketch_b_b64)?;
    let out = infer(state, move |m| {
        let vae = need_vae(m)?;
        let fields = interpolate_terrains(
            &InterpolationRequest {
                topo_a: vae_input(m, vae, &a),
                topo_b: vae_input(m, vae, &b),
                gammas: req.gammas,
                mode: CodeMode::Mean,
            },
            vae,
        )?;
        render_all(m, &fields)
    })
    .await?;
    Ok(Json(stamp(out, start)))
}
