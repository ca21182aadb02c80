mod support;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use sqa_cli::scoring::{ScoreRecord, Scorer};
use sqa_cli::service::{router, AppState};
use sqa_core::audio::encode_wav_bytes;
use support::{tiny_weights, tone_clip};
use tower::ServiceExt;

fn app(dir: &std::path::Path) -> axum::Router {
    let scorers = vec![
        Scorer::load(tiny_weights(dir, "three_output", 4)).unwrap(),
        Scorer::load(tiny_weights(dir, "sig_only", 4)).unwrap(),
    ];
    router(Arc::new(AppState::new(scorers, 60.0).unwrap()))
}

async fn send(app: &axum::Router, req: Request<Body>) -> (StatusCode, serde_json::Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn wav_post(uri: &str, body: Vec<u8>) -> Request<Body> {
    Request::post(uri)
        .header("content-type", "audio/wav")
        .body(Body::from(body))
        .unwrap()
}

#[tokio::test]
async fn valid_wav_is_scored() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let wav = encode_wav_bytes(&tone_clip(1.5, 16_000, "x")).unwrap();
    let (status, body) = send(&app, wav_post("/score?clip_id=talk", wav)).await;
    assert_eq!(status, StatusCode::OK);
    let rec: ScoreRecord = serde_json::from_value(body).unwrap();
    assert_eq!(rec.clip_id, "talk");
    assert!(rec.bak.is_some());
    assert!((1.0..=5.0).contains(&rec.sig));
}

#[tokio::test]
async fn variant_query_selects_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let wav = encode_wav_bytes(&tone_clip(0.5, 48_000, "x")).unwrap();
    let (status, body) = send(&app, wav_post("/score?variant=sig_only", wav.clone())).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body["bak"].is_null());
    let (status, _) = send(&app, wav_post("/score?variant=nope", wav)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn json_path_request_matches_upload() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let path = support::write_tone(&dir.path().join("x.wav"), 2.0);
    let req = Request::post("/score")
        .header("content-type", "application/json")
        .body(Body::from(serde_json::json!({ "path": path }).to_string()))
        .unwrap();
    let (status, by_path) = send(&app, req).await;
    assert_eq!(status, StatusCode::OK);
    let (_, by_upload) = send(&app, wav_post("/score?clip_id=x", std::fs::read(&path).unwrap())).await;
    assert_eq!(by_path, by_upload);

    let missing = Request::post("/score")
        .header("content-type", "application/json")
        .body(Body::from(r#"{"path": "/no/such.wav"}"#))
        .unwrap();
    assert_eq!(send(&app, missing).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn non_audio_body_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let req = Request::post("/score")
        .header("content-type", "text/plain")
        .body(Body::from("hello, not audio"))
        .unwrap();
    let (status, body) = send(&app, req).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].is_string());
}

#[tokio::test]
async fn over_long_audio_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let wav = encode_wav_bytes(&tone_clip(61.0, 8_000, "x")).unwrap();
    let (status, _) = send(&app, wav_post("/score", wav)).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_requests_agree() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let wav = encode_wav_bytes(&tone_clip(3.0, 16_000, "x")).unwrap();
    let tasks: Vec<_> = (0..8)
        .map(|_| {
            let (app, wav) = (app.clone(), wav.clone());
            tokio::spawn(async move { send(&app, wav_post("/score", wav)).await })
        })
        .collect();
    let mut bodies = Vec::new();
    for t in tasks {
        let (status, body) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        bodies.push(body);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}

#[tokio::test]
async fn healthz_reports_loaded_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, body) = send(&app, Request::get("/healthz").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["default_variant"], "three_output");
    assert_eq!(body["variants"].as_object().unwrap().len(), 2);
    assert_eq!(body["version"], env!("CARGO_PKG_VERSION"));
    assert!(body["feature_config"].as_str().is_some_and(|s| !s.is_empty()));
}
