use std::io::Cursor;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use candle_core::{DType, Device};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use topogen_core::dem::normalize_patch;
use topogen_core::sketch::{extract_topo_map, SketchParams};
use topogen_core::synth::synthetic_terrain;
use topogen_models::{GanConfig, Generator, Vae, VaeConfig};
use topogen_service::{router, AppState, CheckpointInfo, GenerateResponse, Models, ServiceConfig, ServiceError};
use tower::ServiceExt;

const PX: usize = 16;

fn models() -> Models {
    let gan = GanConfig {
        input_px: PX,
        ngf: 4,
        ndf: 4,
        d_layers: 1,
        ..GanConfig::default()
    };
    let vae = VaeConfig {
        input_px: PX,
        depth: 2,
        base_channels: 4,
        latent_dim: 8,
        ..VaeConfig::default()
    };
    Models {
        generator: Generator::new(&gan, DType::F32, &Device::Cpu).unwrap(),
        vae: Some(Vae::new(&vae, DType::F32, &Device::Cpu).unwrap()),
    }
}

fn ready(timeout: Duration) -> Arc<AppState> {
    AppState::ready(models(), CheckpointInfo::default(), timeout)
}

fn sketch_b64(seed: u64, px: usize) -> String {
    let dem = normalize_patch(&synthetic_terrain(px, seed), px).unwrap();
    let map = extract_topo_map(&dem, &SketchParams::default()).unwrap();
    let mut png = Cursor::new(Vec::new());
    map.to_rgb8().write_to(&mut png, image::ImageFormat::Png).unwrap();
    STANDARD.encode(png.into_inner())
}

async fn call(state: &Arc<AppState>, method: &str, path: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(path)
        .header(header::CONTENT_TYPE, "application/json")
        .body(match body {
            Some(v) => Body::from(v.to_string()),
            None => Body::empty(),
        })
        .unwrap();
    let res = router(state.clone()).oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn responses(v: Value) -> Vec<GenerateResponse> {
    serde_json::from_value(v).unwrap()
}

fn dems(list: &[GenerateResponse]) -> Vec<&str> {
    list.iter().map(|r| r.dem_png16_b64.as_str()).collect()
}

#[tokio::test]
async fn health_and_readiness() {
    let state = AppState::loading(CheckpointInfo::default(), Duration::from_secs(5));
    let (status, body) = call(&state, "GET", "/api/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "loading");

    let req = json!({ "sketch_png_b64": sketch_b64(1, PX) });
    let (status, body) = call(&state, "POST", "/api/generate", Some(req.clone())).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["error"], "not_ready");

    state.install(models());
    let (_, body) = call(&state, "GET", "/api/health", None).await;
    assert_eq!(body["status"], "ready");
    let (status, _) = call(&state, "POST", "/api/generate", Some(req)).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn generate_returns_decodable_deterministic_images() {
    let state = ready(Duration::from_secs(30));
    // a sketch at another size is resized to the model input
    for through_vae in [false, true] {
        let req = json!({ "sketch_png_b64": sketch_b64(2, 40), "through_vae": through_vae });
        let (status, a) = call(&state, "POST", "/api/generate", Some(req.clone())).await;
        assert_eq!(status, StatusCode::OK, "{a}");
        let (_, b) = call(&state, "POST", "/api/generate", Some(req)).await;
        let (a, b): (GenerateResponse, GenerateResponse) =
            (serde_json::from_value(a).unwrap(), serde_json::from_value(b).unwrap());
        assert_eq!(a.dem_png16_b64, b.dem_png16_b64);
        assert_eq!(a.hillshade_png_b64, b.hillshade_png_b64);
        assert_eq!((a.sidecar.h_min, a.sidecar.h_max), (0.0, 1.0));
        assert!(a.latency_ms >= 0.0);

        let dem = image::load_from_memory(&STANDARD.decode(&a.dem_png16_b64).unwrap()).unwrap();
        assert!(matches!(dem, image::DynamicImage::ImageLuma16(_)));
        assert_eq!((dem.width(), dem.height()), (PX as u32, PX as u32));
        let shade = image::load_from_memory(&STANDARD.decode(&a.hillshade_png_b64).unwrap()).unwrap();
        assert!(matches!(shade, image::DynamicImage::ImageLuma8(_)));
        assert_eq!((shade.width(), shade.height()), (PX as u32, PX as u32));
    }
}

#[tokio::test]
async fn malformed_payloads_are_rejected() {
    let state = ready(Duration::from_secs(30));
    let full = sketch_b64(3, PX);
    let truncated = &full[..full.len() / 2 + 1];
    let (status, body) = call(&state, "POST", "/api/generate", Some(json!({ "sketch_png_b64": truncated }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "bad_sketch_encoding");

    let not_png = STANDARD.encode(b"plain text");
    let (status, body) = call(&state, "POST", "/api/generate", Some(json!({ "sketch_png_b64": not_png }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "bad_sketch_encoding");

    let (status, body) = call(&state, "POST", "/api/generate", Some(json!({ "sketch": full }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "invalid_request");
}

#[tokio::test]
async fn variants_contract() {
    let state = ready(Duration::from_secs(30));
    let sketch = sketch_b64(4, PX);
    let (status, body) = call(
        &state,
        "POST",
        "/api/variants",
        Some(json!({ "sketch_png_b64": sketch, "n": 3, "eps_scale": 0.0 })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let list = responses(body);
    assert_eq!(list.len(), 3);
    assert!(dems(&list).windows(2).all(|w| w[0] == w[1]));

    let req = json!({ "sketch_png_b64": sketch, "n": 4, "eps_scale": 1.0, "seed": 9 });
    let (_, a) = call(&state, "POST", "/api/variants", Some(req.clone())).await;
    let (_, b) = call(&state, "POST", "/api/variants", Some(req)).await;
    assert_eq!(dems(&responses(a)), dems(&responses(b)));

    for n in [0, 17] {
        let (status, body) =
            call(&state, "POST", "/api/variants", Some(json!({ "sketch_png_b64": sketch, "n": n }))).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert_eq!(body["error"], "invalid_request");
    }
    let (status, _) = call(
        &state,
        "POST",
        "/api/variants",
        Some(json!({ "sketch_png_b64": sketch, "n": 2, "eps_scale": -1.0 })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn interpolation_contract() {
    let state = ready(Duration::from_secs(30));
    let (a, b) = (sketch_b64(5, PX), sketch_b64(6, PX));
    let (status, body) = call(
        &state,
        "POST",
        "/api/interpolate",
        Some(json!({ "sketch_a_b64": a, "sketch_b_b64": b, "gammas": [1.0] })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let endpoint = responses(body);
    let (_, direct) = call(
        &state,
        "POST",
        "/api/generate",
        Some(json!({ "sketch_png_b64": a, "through_vae": true })),
    )
    .await;
    assert_eq!(endpoint[0].dem_png16_b64, direct["dem_png16_b64"].as_str().unwrap());

    let (_, body) = call(&state, "POST", "/api/interpolate", Some(json!({ "sketch_a_b64": a, "sketch_b_b64": b }))).await;
    let fig = responses(body);
    assert_eq!(fig.len(), 5);
    // the listed order follows the requested gammas
    let (_, body) = call(
        &state,
        "POST",
        "/api/interpolate",
        Some(json!({ "sketch_a_b64": a, "sketch_b_b64": b, "gammas": [0.835, 0.167] })),
    )
    .await;
    let swapped = responses(body);
    assert_eq!(swapped[0].dem_png16_b64, fig[4].dem_png16_b64);
    assert_eq!(swapped[1].dem_png16_b64, fig[0].dem_png16_b64);

    for gammas in [json!([1.5]), json!([]), json!([-0.1, 0.5])] {
        let (status, body) = call(
            &state,
            "POST",
            "/api/interpolate",
            Some(json!({ "sketch_a_b64": a, "sketch_b_b64": b, "gammas": gammas })),
        )
        .await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert_eq!(body["error"], "invalid_request");
    }
}

#[tokio::test]
async fn endpoints_needing_the_vae_refuse_without_it() {
    let mut m = models();
    m.vae = None;
    let state = AppState::ready(m, CheckpointInfo::default(), Duration::from_secs(30));
    let req = json!({ "sketch_png_b64": sketch_b64(7, PX), "through_vae": true });
    let (status, body) = call(&state, "POST", "/api/generate", Some(req)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "invalid_request");
}

#[tokio::test]
async fn slow_requests_time_out() {
    // a generator big enough that one pass takes far longer than a millisecond
    let cfg = GanConfig {
        input_px: 128,
        ngf: 32,
        ..GanConfig::default()
    };
    let m = Models {
        generator: Generator::new(&cfg, DType::F32, &Device::Cpu).unwrap(),
        vae: None,
    };
    let state = AppState::ready(m, CheckpointInfo::default(), Duration::from_millis(1));
    let req = json!({ "sketch_png_b64": sketch_b64(8, PX) });
    let (status, body) = call(&state, "POST", "/api/generate", Some(req)).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["error"], "timeout");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_identical_requests_agree() {
    let state = ready(Duration::from_secs(60));
    let req = json!({ "sketch_png_b64": sketch_b64(9, PX), "through_vae": true });
    let calls = (0..6).map(|_| {
        let (state, req) = (state.clone(), req.clone());
        tokio::spawn(async move { call(&state, "POST", "/api/generate", Some(req)).await })
    });
    let mut payloads = Vec::new();
    for c in calls {
        let (status, body) = c.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        payloads.push(body["dem_png16_b64"].as_str().unwrap().to_string());
    }
    assert!(payloads.windows(2).all(|w| w[0] == w[1]));
}

#[tokio::test]
async fn cors_allows_the_ui_origin() {
    let state = ready(Duration::from_secs(5));
    let req = Request::builder()
        .uri("/api/health")
        .header(header::ORIGIN, "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let res = router(state).oneshot(req).await.unwrap();
    assert!(res.headers().contains_key(header::ACCESS_CONTROL_ALLOW_ORIGIN));
}

#[tokio::test]
async fn missing_checkpoint_stops_the_server() {
    let cfg = ServiceConfig {
        host: "127.0.0.1".into(),
        port: 0,
        gan_ckpt: "/nonexistent/gan.ckpt".into(),
        vae_ckpt: None,
        timeout: Duration::from_secs(1),
    };
    let mut bound = None;
    let err = topogen_service::run(cfg, |addr| bound = Some(addr)).await.unwrap_err();
    assert!(bound.is_some());
    assert!(matches!(err, ServiceError::Load(_)));
    assert!(err.is_input_error());
}
