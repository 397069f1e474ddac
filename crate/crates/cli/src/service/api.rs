//! HTTP routes over a [`JobService`]. All bodies are JSON except the PNG
//! downloads; errors are `{"error": "..."}`.

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use painter_core::canvas::{encode_mask_png, encode_png, png_data_url, rasterize};
use painter_core::{build_resample_plan, count_ops, CompositionSpec, OpCountReport, ResampleConfig, Strategy};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::patches::sample_patches;
use super::{JobRequest, JobService, SubmitError};

pub fn router(service: JobService) -> Router {
    Router::new()
        .route("/jobs", post(create_job))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/result.png", get(get_result))
        .route("/jobs/{id}/snapshots/{file}", get(get_snapshot))
        .route("/jobs/{id}/cancel", post(cancel_job))
        .route("/strategies", get(strategies))
        .route("/patches", get(patches))
        .route("/rasterize", post(rasterize_spec))
        .with_state(service)
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

fn not_found(what: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("{what} not found"))
}

fn internal(e: anyhow::Error) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}"))
}

/// Parse JSON ourselves so malformed bodies get a 400 with our error shape.
fn parse<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| bad_request(format!("malformed request body: {e}")))
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn create_job(State(service): State<JobService>, body: Bytes) -> ApiResult<Response> {
    let request: JobRequest = parse(&body)?;
    // validation decodes images and loads the denoiser, keep it off the reactor
    let record = tokio::task::spawn_blocking(move || service.submit(request))
        .await
        .map_err(|e| internal(e.into()))?
        .map_err(|e| match e {
            SubmitError::Invalid(msg) => bad_request(msg),
            SubmitError::QueueFull => ApiError(StatusCode::SERVICE_UNAVAILABLE, "job queue is full".into()),
            SubmitError::Internal(msg) => ApiError(StatusCode::INTERNAL_SERVER_ERROR, msg),
        })?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "id": record.id, "state": record.state, "ops": record.ops })))
        .into_response())
}

async fn get_job(State(service): State<JobService>, Path(id): Path<String>) -> ApiResult<Response> {
    let record = service.get(&id).ok_or_else(|| not_found("job"))?;
    Ok(Json(record).into_response())
}

async fn get_result(State(service): State<JobService>, Path(id): Path<String>) -> ApiResult<Response> {
    let record = service.get(&id).ok_or_else(|| not_found("job"))?;
    let Some(result) = record.result else {
        return Err(ApiError(StatusCode::CONFLICT, format!("job is {:?}, no result", record.state).to_lowercase()));
    };
    Ok(png(service.store().blob(&result.blob).map_err(internal)?))
}

async fn get_snapshot(
    State(service): State<JobService>,
    Path((id, file)): Path<(String, String)>,
) -> ApiResult<Response> {
    let record = service.get(&id).ok_or_else(|| not_found("job"))?;
    let k: usize = file
        .strip_suffix(".png")
        .and_then(|k| k.parse().ok())
        .ok_or_else(|| bad_request(format!("expected <k>.png, got {file}")))?;
    let snap = record.snapshots.get(k).ok_or_else(|| not_found("snapshot"))?;
    Ok(png(service.store().blob(&snap.blob).map_err(internal)?))
}

async fn cancel_job(State(service): State<JobService>, Path(id): Path<String>) -> ApiResult<Response> {
    match service.cancel(&id).map_err(internal)? {
        None => Err(not_found("job")),
        Some(Err(record)) => {
            Err(ApiError(StatusCode::CONFLICT, format!("job already finished ({:?})", record.state).to_lowercase()))
        }
        Some(Ok(record)) => Ok(Json(record).into_response()),
    }
}

#[derive(Deserialize)]
struct StrategyQuery {
    #[serde(rename = "T")]
    steps: Option<usize>,
    lambda: Option<usize>,
    repeats: Option<usize>,
}

#[derive(Serialize)]
struct StrategyEntry {
    strategy: Strategy,
    lambda: usize,
    repeats: usize,
    #[serde(rename = "T")]
    steps: usize,
    #[serde(flatten)]
    ops: OpCountReport,
}

async fn strategies(Query(q): Query<StrategyQuery>) -> ApiResult<Response> {
    let defaults = ResampleConfig::default();
    let steps = q.steps.unwrap_or(painter_core::schedule::DEFAULT_STEPS);
    let entries = Strategy::PRESETS
        .iter()
        .map(|&strategy| {
            let config = ResampleConfig {
                jump_length: q.lambda.unwrap_or(defaults.jump_length),
                repeats: q.repeats.unwrap_or(defaults.repeats),
                strategy,
            };
            let plan = build_resample_plan(&config, steps).map_err(|e| bad_request(e.to_string()))?;
            Ok(StrategyEntry {
                strategy,
                lambda: config.jump_length,
                repeats: config.repeats,
                steps,
                ops: count_ops(&plan),
            })
        })
        .collect::<ApiResult<Vec<_>>>()?;
    Ok(Json(entries).into_response())
}

async fn patches() -> Response {
    Json(sample_patches()).into_response()
}

/// Mask echo: what the server makes of a spec, without painting it.
async fn rasterize_spec(body: Bytes) -> ApiResult<Response> {
    let spec: CompositionSpec = parse(&body)?;
    let comp = spec.resolve(None).map_err(|e| bad_request(e.to_string()))?;
    let raster = rasterize(&comp).map_err(|e| bad_request(e.to_string()))?;
    let shape = raster.input.shape();
    let mask = raster.input.mask();
    let rows: Vec<String> = (0..shape.height)
        .map(|y| (0..shape.width).map(|x| if mask.get(0, y, x) { '1' } else { '0' }).collect())
        .collect();
    Ok(Json(json!({
        "width": shape.width,
        "height": shape.height,
        "channels": shape.channels,
        "known_pixels": mask.known_count() / shape.channels,
        "mask_rows": rows,
        "mask": png_data_url(&encode_mask_png(mask).map_err(|e| internal(e.into()))?),
        "known": png_data_url(&encode_png(raster.input.known()).map_err(|e| internal(e.into()))?),
        "warnings": raster.warnings,
    }))
    .into_response())
}
