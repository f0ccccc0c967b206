use std::collections::BTreeMap;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tower_http::cors::CorsLayer;

use tensiform::fixtures::{FixtureSpec, FIXTURE_NAMES};
use tensiform::io::{run_batch, run_request, ErrorBody, ModelFile, SolveRequest};

/// Server-side wall-clock cap on one request, in seconds.
pub const SOLVE_TIME_CAP: f64 = 60.0;
pub const MAX_BATCH_SEEDS: usize = 256;
const BODY_LIMIT: usize = 32 << 20;

pub fn router() -> Router {
    Router::new()
        .route("/api/solve", post(solve))
        .route("/api/solve/batch", post(solve_batch))
        .route("/api/fixtures", get(list_fixtures))
        .route("/api/fixtures/:name", get(get_fixture))
        .route("/healthz", get(health))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .layer(CorsLayer::permissive())
}

pub async fn serve(host: &str, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn error(status: StatusCode, kind: &str, message: impl Into<String>) -> Response {
    let body = ErrorBody { kind: kind.into(), message: message.into(), violations: vec![] };
    (status, Json(body)).into_response()
}

fn status(code: u16) -> StatusCode {
    StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
}

fn parse_request(body: &[u8]) -> Result<SolveRequest, Box<Response>> {
    serde_json::from_slice(body).map_err(|e| Box::new(error(StatusCode::BAD_REQUEST, "invalid_request", e.to_string())))
}

/// Caps the per-solve time limit at `cap` seconds.
fn cap_time(req: &mut SolveRequest, cap: f64) {
    let t = req.options.time_limit.map_or(cap, |t| t.min(cap));
    req.options.time_limit = Some(t);
}

/// Runs `f` on the blocking pool; a panic becomes a 500.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, Response> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))
}

async fn solve(body: Bytes) -> Response {
    let mut req = match parse_request(&body) {
        Ok(r) => r,
        Err(resp) => return *resp,
    };
    cap_time(&mut req, SOLVE_TIME_CAP);
    match blocking(move || run_request(&req)).await {
        Ok((result, outcome)) => (status(outcome.http_status()), Json(result)).into_response(),
        Err(resp) => resp,
    }
}

async fn solve_batch(body: Bytes) -> Response {
    let mut req = match parse_request(&body) {
        Ok(r) => r,
        Err(resp) => return *resp,
    };
    if req.seeds.len() > MAX_BATCH_SEEDS {
        return error(
            StatusCode::BAD_REQUEST,
            "invalid_request",
            format!("{} seeds requested, at most {MAX_BATCH_SEEDS} allowed", req.seeds.len()),
        );
    }
    // Seeds run in waves of the available parallelism; split the cap so the
    // whole batch stays within it.
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let waves = req.seeds.len().max(1).div_ceil(threads);
    cap_time(&mut req, SOLVE_TIME_CAP / waves as f64);
    match blocking(move || run_batch(&req)).await {
        Ok((result, outcome)) => (status(outcome.http_status()), Json(result)).into_response(),
        Err(resp) => resp,
    }
}

async fn list_fixtures() -> Response {
    let specs: Vec<FixtureSpec> = FIXTURE_NAMES.iter().filter_map(|n| FixtureSpec::defaults(n).ok()).collect();
    Json(specs).into_response()
}

async fn get_fixture(Path(name): Path<String>, Query(params): Query<BTreeMap<String, f64>>) -> Response {
    if !FIXTURE_NAMES.contains(&name.as_str()) {
        return error(StatusCode::NOT_FOUND, "unknown_fixture", format!("unknown fixture '{name}'"));
    }
    let built = blocking(move || {
        let spec = FixtureSpec::with_params(&name, &params)?;
        let model = spec.build()?;
        Ok::<_, tensiform::Error>(ModelFile::from_model(&model).named(spec.name()))
    })
    .await;
    match built {
        Ok(Ok(file)) => Json(file).into_response(),
        Ok(Err(e)) => error(StatusCode::BAD_REQUEST, "invalid_parameters", e.to_string()),
        Err(resp) => resp,
    }
}

async fn health() -> Response {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") })).into_response()
}
