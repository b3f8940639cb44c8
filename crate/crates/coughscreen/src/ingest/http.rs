//! HTTP collection service.
//!
//! Endpoints:
//!
//! | method | path                     | result                              |
//! |--------|--------------------------|-------------------------------------|
//! | POST   | `/v1/samples`            | 201 + sample id, 400/422/429        |
//! | GET    | `/v1/samples/{id}`       | record JSON, 404 unknown            |
//! | GET    | `/v1/samples/{id}/audio` | canonical WAV bytes, 404 unknown    |
//! | GET    | `/v1/export/{date}`      | deterministic daily tar bundle      |
//! | GET    | `/v1/healthz`            | 200 when serving                    |
//!
//! Uploads are `multipart/form-data` with parts `audio` (WAV bytes),
//! `metadata` (JSON object), and `kind` (`cough`, `digits`, or `om`).
//! Malformed requests get 400; de-identification violations and duration
//! problems get 422 with the violation list; per-IP rate limiting returns
//! 429. All store mutations go through one mutex, so writers serialize.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::io::{self, Write as _};
use std::net::{IpAddr, SocketAddr};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::{ConnectInfo, DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::ServiceConfig;
use crate::ingest::export::build_daily_export;
use crate::ingest::store::{SampleKind, Store};
use crate::ingest::IngestError;

/// Upper bound on an upload body; a 60 s stereo 48 kHz WAV is ~11.5 MB.
const MAX_UPLOAD_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: String,
        #[source]
        source: io::Error,
    },

    #[error("storage unavailable: {0}")]
    StorageUnavailable(#[from] IngestError),

    #[error("service configuration: {0}")]
    Config(#[from] crate::config::ConfigError),

    #[error("server error: {0}")]
    Runtime(#[source] io::Error),
}

/// Sliding one-hour window per client IP.
struct RateLimiter {
    limit: u32,
    window: Duration,
    hits: HashMap<IpAddr, VecDeque<Instant>>,
}

impl RateLimiter {
    fn new(limit: u32) -> Self {
        RateLimiter { limit, window: Duration::from_secs(3600), hits: HashMap::new() }
    }

    /// Records a request at `now` and says whether it fits the budget.
    fn allow(&mut self, ip: IpAddr, now: Instant) -> bool {
        let queue = self.hits.entry(ip).or_default();
        while queue.front().is_some_and(|t| now.duration_since(*t) >= self.window) {
            queue.pop_front();
        }
        if (queue.len() as u32) < self.limit {
            queue.push_back(now);
            true
        } else {
            false
        }
    }
}

#[derive(Clone)]
struct AppState {
    store: Arc<Mutex<Store>>,
    limiter: Arc<Mutex<RateLimiter>>,
}

fn json_error(status: StatusCode, message: &str) -> Response {
    (status, Json(json!({ "error": message }))).into_response()
}

fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/samples", post(post_sample))
        .route("/v1/samples/{id}", get(get_sample))
        .route("/v1/samples/{id}/audio", get(get_audio))
        .route("/v1/export/{date}", get(get_export))
        .route("/v1/healthz", get(healthz))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

async fn post_sample(
    State(state): State<AppState>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    mut multipart: Multipart,
) -> Response {
    {
        let mut limiter = state.limiter.lock().expect("limiter lock");
        if !limiter.allow(peer.ip(), Instant::now()) {
            return (
                StatusCode::TOO_MANY_REQUESTS,
                Json(json!({
                    "error": "hourly upload limit reached for this address",
                    "limit_per_hour": limiter.limit,
                })),
            )
                .into_response();
        }
    }

    let mut audio: Option<Vec<u8>> = None;
    let mut metadata_text: Option<String> = None;
    let mut kind_text: Option<String> = None;
    loop {
        let field = match multipart.next_field().await {
            Ok(Some(field)) => field,
            Ok(None) => break,
            Err(e) => return json_error(StatusCode::BAD_REQUEST, &format!("bad multipart: {e}")),
        };
        let name = field.name().unwrap_or_default().to_string();
        match name.as_str() {
            "audio" => match field.bytes().await {
                Ok(bytes) => audio = Some(bytes.to_vec()),
                Err(e) => {
                    return json_error(StatusCode::BAD_REQUEST, &format!("bad audio part: {e}"))
                }
            },
            "metadata" => match field.text().await {
                Ok(text) => metadata_text = Some(text),
                Err(e) => {
                    return json_error(StatusCode::BAD_REQUEST, &format!("bad metadata part: {e}"))
                }
            },
            "kind" => match field.text().await {
                Ok(text) => kind_text = Some(text),
                Err(e) => {
                    return json_error(StatusCode::BAD_REQUEST, &format!("bad kind part: {e}"))
                }
            },
            other => {
                return json_error(StatusCode::BAD_REQUEST, &format!("unexpected part `{other}`"))
            }
        }
    }

    let mut missing = Vec::new();
    if audio.is_none() {
        missing.push("audio");
    }
    if metadata_text.is_none() {
        missing.push("metadata");
    }
    if kind_text.is_none() {
        missing.push("kind");
    }
    if !missing.is_empty() {
        return json_error(
            StatusCode::BAD_REQUEST,
            &format!("missing multipart part(s): {}", missing.join(", ")),
        );
    }

    let kind: SampleKind = match kind_text.as_deref().unwrap_or_default().trim().parse() {
        Ok(kind) => kind,
        Err(e) => return json_error(StatusCode::BAD_REQUEST, &e),
    };
    let raw_metadata: Value = match serde_json::from_str(metadata_text.as_deref().unwrap()) {
        Ok(value) => value,
        Err(e) => {
            return json_error(StatusCode::BAD_REQUEST, &format!("metadata is not valid JSON: {e}"))
        }
    };

    let result = {
        let mut store = state.store.lock().expect("store lock");
        store.ingest(kind, audio.as_deref().unwrap(), &raw_metadata)
    };
    match result {
        Ok(outcome) => (
            StatusCode::CREATED,
            Json(json!({
                "sample_id": outcome.sample_id,
                "duplicate": outcome.duplicate,
                "duration_warning": outcome.duration_warning,
            })),
        )
            .into_response(),
        Err(IngestError::DeidViolations(violations)) => (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({
                "error": "metadata failed de-identification checks",
                "violations": violations,
            })),
        )
            .into_response(),
        Err(IngestError::DurationOutOfRange { seconds }) => (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({
                "error": "clip duration outside the accepted 1-60 s range",
                "seconds": seconds,
            })),
        )
            .into_response(),
        Err(IngestError::InvalidAudio(e)) => {
            json_error(StatusCode::BAD_REQUEST, &format!("invalid audio: {e}"))
        }
        Err(e) => {
            log::error!("ingest failed: {e}");
            json_error(StatusCode::INTERNAL_SERVER_ERROR, "storage failure")
        }
    }
}

async fn get_sample(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let record = {
        let store = state.store.lock().expect("store lock");
        store.get(&id)
    };
    match record {
        Ok(Some(record)) => Json(record).into_response(),
        Ok(None) => json_error(StatusCode::NOT_FOUND, "unknown sample id"),
        Err(e) => {
            log::error!("lookup failed: {e}");
            json_error(StatusCode::INTERNAL_SERVER_ERROR, "storage failure")
        }
    }
}

async fn get_audio(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let bytes = {
        let store = state.store.lock().expect("store lock");
        store.audio_bytes(&id)
    };
    match bytes {
        Ok(Some(bytes)) => ([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response(),
        Ok(None) => json_error(StatusCode::NOT_FOUND, "unknown sample id"),
        Err(e) => {
            log::error!("audio fetch failed: {e}");
            json_error(StatusCode::INTERNAL_SERVER_ERROR, "storage failure")
        }
    }
}

async fn get_export(State(state): State<AppState>, Path(date): Path<String>) -> Response {
    let Ok(day) = NaiveDate::parse_from_str(&date, "%Y-%m-%d") else {
        return json_error(StatusCode::BAD_REQUEST, "date must be YYYY-MM-DD");
    };
    let outcome = {
        let store = state.store.lock().expect("store lock");
        build_daily_export(&store, day)
    };
    match outcome {
        Ok(outcome) => (
            [
                (header::CONTENT_TYPE, "application/x-tar".to_string()),
                (
                    header::CONTENT_DISPOSITION,
                    format!("attachment; filename=\"sigma-export-{day}.tar\""),
                ),
            ],
            outcome.tar_bytes,
        )
            .into_response(),
        Err(e) => {
            log::error!("export failed: {e}");
            json_error(StatusCode::INTERNAL_SERVER_ERROR, "export failure")
        }
    }
}

async fn healthz(State(state): State<AppState>) -> Response {
    let samples = state.store.lock().expect("store lock").len();
    Json(json!({ "status": "ok", "samples": samples })).into_response()
}

/// Runs the service on an already-bound listener until `shutdown` resolves.
/// In-flight requests finish before the future returns, so the index is
/// complete when the process exits this way.
pub async fn serve_on<F>(
    listener: tokio::net::TcpListener,
    store: Store,
    rate_limit_per_hour: u32,
    shutdown: F,
) -> Result<(), ServeError>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    let state = AppState {
        store: Arc::new(Mutex::new(store)),
        limiter: Arc::new(Mutex::new(RateLimiter::new(rate_limit_per_hour))),
    };
    axum::serve(listener, router(state).into_make_service_with_connect_info::<SocketAddr>())
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(ServeError::Runtime)
}

/// Opens the store, binds the configured address, and serves until
/// `shutdown` resolves. Prints the bound address on stdout (useful with
/// `bind_addr` port 0).
pub async fn serve_with_shutdown<F>(config: &ServiceConfig, shutdown: F) -> Result<(), ServeError>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    let regions = config.load_regions()?;
    let store = Store::open(&config.storage_root, regions)?;
    let listener = tokio::net::TcpListener::bind(&config.bind_addr).await.map_err(|e| {
        ServeError::BindFailure { addr: config.bind_addr.clone(), source: e }
    })?;
    let addr = listener.local_addr().map_err(ServeError::Runtime)?;
    println!("listening on http://{addr}");
    io::stdout().flush().ok();
    log::info!("serving store {:?} on {addr}", config.storage_root);
    serve_on(listener, store, config.rate_limit_per_hour, shutdown).await
}

/// Runs the service until SIGINT or SIGTERM.
pub async fn serve(config: &ServiceConfig) -> Result<(), ServeError> {
    serve_with_shutdown(config, shutdown_signal()).await
}

async fn shutdown_signal() {
    let ctrl_c = async {
        tokio::signal::ctrl_c().await.ok();
    };
    #[cfg(unix)]
    let terminate = async {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut stream) => {
                stream.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = terminate => {},
    }
}
