//! Local HTTP service over a generator checkpoint and an optional VAE
//! checkpoint.
//!
//! Routes:
//!
//! * `GET /api/health` reports `loading` until both checkpoints are in
//!   memory, then `ready`.
//! * `POST /api/generate`, `/api/variants`, `/api/interpolate` take base64
//!   PNG sketches and answer with 16-bit DEM PNGs, their value range and an
//!   8-bit hillshade preview.
//!
//! Checkpoints are loaded once in the background after the socket is bound;
//! models are read-only afterwards, so requests run concurrently on the
//! blocking pool without locks.

mod api;
mod render;

use std::future::IntoFuture;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;
use tokio::net::TcpListener;
use topogen_models::checkpoint::{GanCheckpoint, VaeCheckpoint};
use topogen_models::{Generator, ModelError, Vae};
use tower_http::cors::CorsLayer;

pub use api::{
    ApiError, GenerateRequest, GenerateResponse, InterpolateRequest, ValueRange, VariantsRequest,
    MAX_GAMMAS, MAX_VARIANTS,
};
pub use render::{decode_sketch, render};

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub gan_ckpt: PathBuf,
    pub vae_ckpt: Option<PathBuf>,
    pub timeout: Duration,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("loading checkpoints: {0}")]
    Load(#[from] ModelError),
    #[error("server: {0}")]
    Serve(std::io::Error),
}

impl ServiceError {
    /// Whether the failure comes from the caller's arguments or files.
    pub fn is_input_error(&self) -> bool {
        match self {
            ServiceError::Bind { .. } => true,
            ServiceError::Load(e) => e.is_input_error(),
            ServiceError::Serve(_) => false,
        }
    }
}

/// Weights served by the API.
#[derive(Debug)]
pub struct Models {
    pub generator: Generator,
    pub vae: Option<Vae>,
}

impl Models {
    pub fn load(gan: &Path, vae: Option<&Path>) -> Result<Self, ModelError> {
        let generator = GanCheckpoint::load(gan)?.generator;
        let vae = vae.map(VaeCheckpoint::load).transpose()?.map(|ck| ck.model);
        Ok(Self { generator, vae })
    }
}

/// Checkpoint paths as reported by the health endpoint.
#[derive(Debug, Clone, Default, Serialize)]
pub struct CheckpointInfo {
    pub gan: Option<String>,
    pub vae: Option<String>,
}

#[derive(Debug)]
pub struct AppState {
    models: OnceLock<Models>,
    checkpoints: CheckpointInfo,
    timeout: Duration,
}

impl AppState {
    /// State whose models are not loaded yet.
    pub fn loading(checkpoints: CheckpointInfo, timeout: Duration) -> Arc<Self> {
        Arc::new(Self {
            models: OnceLock::new(),
            checkpoints,
            timeout,
        })
    }

    pub fn ready(models: Models, checkpoints: CheckpointInfo, timeout: Duration) -> Arc<Self> {
        let state = Self::loading(checkpoints, timeout);
        state.install(models);
        state
    }

    /// Make `models` available to requests. Later calls are ignored.
    pub fn install(&self, models: Models) {
        if self.models.set(models).is_err() {
            log::warn!("models already loaded; ignoring second load");
        }
    }

    pub fn models(&self) -> Option<&Models> {
        self.models.get()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(api::health))
        .route("/api/generate", post(api::generate))
        .route("/api/variants", post(api::variants))
        .route("/api/interpolate", post(api::interpolate))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Bind `cfg.host:cfg.port`, report the bound address through `on_listen`,
/// load the checkpoints and serve until the process ends. A checkpoint that
/// fails to load stops the server.
pub async fn run(cfg: ServiceConfig, on_listen: impl FnOnce(SocketAddr)) -> Result<(), ServiceError> {
    let addr = format!("{}:{}", cfg.host, cfg.port);
    let listener = TcpListener::bind(&addr)
        .await
        .map_err(|source| ServiceError::Bind { addr: addr.clone(), source })?;
    let local = listener
        .local_addr()
        .map_err(|source| ServiceError::Bind { addr, source })?;
    on_listen(local);

    let info = CheckpointInfo {
        gan: Some(cfg.gan_ckpt.display().to_string()),
        vae: cfg.vae_ckpt.as_ref().map(|p| p.display().to_string()),
    };
    let state = AppState::loading(info, cfg.timeout);
    let server = axum::serve(listener, router(state.clone())).into_future();
    tokio::pin!(server);

    let (gan, vae) = (cfg.gan_ckpt.clone(), cfg.vae_ckpt.clone());
    let loader = tokio::task::spawn_blocking(move || Models::load(&gan, vae.as_deref()));
    tokio::select! {
        res = &mut server => return res.map_err(ServiceError::Serve),
        loaded = loader => {
            let models = loaded.expect("checkpoint loader panicked")?;
            log::info!("checkpoints loaded");
            state.install(models);
        }
    }
    server.await.map_err(ServiceError::Serve)
}
