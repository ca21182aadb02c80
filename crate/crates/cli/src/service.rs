//! Local HTTP scoring service.
//!
//! `POST /score` takes a WAV body (or JSON `{"path": ...}` naming a file on
//! the server) and returns a [`ScoreRecord`]; `?variant=` picks among the
//! loaded weight bundles. `GET /healthz` reports the version and hashes.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use sqa_core::audio::{self, AudioClip, AudioError};

use crate::scoring::Scorer;

pub const DEFAULT_MAX_SECONDS: f64 = 60.0;

/// Shared, immutable service state.
#[derive(Debug)]
pub struct AppState {
    /// Scorers in load order; the first is the default.
    scorers: Vec<Scorer>,
    max_seconds: f64,
}

impl AppState {
    pub fn new(scorers: Vec<Scorer>, max_seconds: f64) -> anyhow::Result<Self> {
        anyhow::ensure!(!scorers.is_empty(), "at least one weight bundle is required");
        let mut seen = std::collections::HashSet::new();
        for s in &scorers {
            anyhow::ensure!(seen.insert(s.variant()), "two bundles of variant {}", s.variant());
        }
        Ok(Self { scorers, max_seconds })
    }

    fn scorer(&self, variant: Option<&str>) -> Option<&Scorer> {
        match variant {
            None => self.scorers.first(),
            Some(v) => self.scorers.iter().find(|s| s.variant() == v),
        }
    }

    /// Largest body that can hold `max_seconds` of 48 kHz stereo float audio.
    fn body_limit(&self) -> usize {
        (self.max_seconds * 48_000.0 * 2.0 * 4.0) as usize + 4096
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.body_limit();
    Router::new()
        .route("/score", post(score))
        .route("/healthz", get(healthz))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Binds and serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ScoreQuery {
    variant: Option<String>,
    clip_id: Option<String>,
}

#[derive(Debug, Deserialize)]
struct PathRequest {
    path: String,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn internal(err: impl std::fmt::Display) -> Response {
    let id = uuid::Uuid::new_v4();
    log::error!("internal error {id}: {err}");
    (
        StatusCode::INTERNAL_SERVER_ERROR,
        Json(json!({ "error": "internal error", "id": id.to_string() })),
    )
        .into_response()
}

async fn score(
    State(state): State<Arc<AppState>>,
    Query(q): Query<ScoreQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    if state.scorer(q.variant.as_deref()).is_none() {
        return error(StatusCode::BAD_REQUEST, format!("unknown variant {:?}", q.variant.unwrap_or_default()));
    }
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    let worker_state = Arc::clone(&state);
    let result = tokio::task::spawn_blocking(move || {
        let clip = if is_json {
            let req: PathRequest = match serde_json::from_slice(&body) {
                Ok(r) => r,
                Err(e) => return Err(error(StatusCode::BAD_REQUEST, format!("bad JSON body: {e}"))),
            };
            audio::load_wav(&req.path)
        } else {
            audio::decode_wav_bytes(&body, q.clip_id.clone().unwrap_or_else(|| "request".into()))
        };
        let clip: AudioClip = match clip {
            Ok(c) => c,
            Err(AudioError::Io(e)) if is_json => return Err(error(StatusCode::BAD_REQUEST, e.to_string())),
            Err(AudioError::Io(e)) => return Err(internal(e)),
            Err(e) => return Err(error(StatusCode::BAD_REQUEST, e.to_string())),
        };
        if clip.duration_secs() > worker_state.max_seconds {
            return Err(error(
                StatusCode::PAYLOAD_TOO_LARGE,
                format!(
                    "{:.1} s of audio exceeds the {} s limit",
                    clip.duration_secs(),
                    worker_state.max_seconds
                ),
            ));
        }
        let scorer = worker_state.scorer(q.variant.as_deref()).expect("checked above");
        scorer.score(&clip).map_err(internal)
    })
    .await;
    match result {
        Ok(Ok(record)) => Json(record).into_response(),
        Ok(Err(resp)) => resp,
        Err(join) => internal(join),
    }
}

async fn healthz(State(state): State<Arc<AppState>>) -> Response {
    let default = &state.scorers[0];
    let variants: HashMap<&str, &str> = state
        .scorers
        .iter()
        .map(|s| (s.variant(), s.weights_hash.as_str()))
        .collect();
    Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "weights": default.weights_hash,
        "default_variant": default.variant(),
        "variants": variants,
        "feature_config": default.feature_config_hash,
    }))
    .into_response()
}
