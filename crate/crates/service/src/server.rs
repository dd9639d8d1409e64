//! HTTP API over a loaded bundle and the prediction history.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use prognosis::bundle::ModelBundle;
use prognosis::history::{now_ms, HistoryStore};
use prognosis::predict::{MissingPolicy, PredictRequest};
use prognosis::Error;
use serde::Deserialize;
use serde_json::json;

use crate::predict_bytes;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct AppState {
    pub bundle: ModelBundle,
    pub fingerprint: String,
    pub history: HistoryStore,
    pub policy: MissingPolicy,
}

impl AppState {
    pub fn new(bundle: ModelBundle, history: HistoryStore, policy: MissingPolicy) -> prognosis::Result<Self> {
        Ok(Self {
            fingerprint: bundle.fingerprint()?,
            bundle,
            history,
            policy,
        })
    }
}

/// Status code for an engine error.
pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::Request { .. } | Error::OutOfRange { .. } | Error::Dimension { .. } | Error::Serde(_) => {
            StatusCode::BAD_REQUEST
        }
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn error_response(status: StatusCode, message: String, fields: &[String]) -> Response {
    (status, Json(json!({ "error": message, "fields": fields }))).into_response()
}

fn engine_error(e: &Error) -> Response {
    let fields = match e {
        Error::Request { fields, .. } => fields.clone(),
        _ => Vec::new(),
    };
    error_response(status_for(e), e.to_string(), &fields)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/api/v1/predict", post(predict))
        .route("/api/v1/predictions", get(predictions))
        .route("/api/v1/model", get(model))
        .route("/api/v1/nomogram", get(nomogram))
        .with_state(state)
}

async fn healthz() -> Response {
    Json(json!({ "status": "ok", "version": VERSION })).into_response()
}

async fn predict(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let request: PredictRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, format!("malformed request body: {e}"), &[]),
    };
    let task = tokio::task::spawn_blocking(move || {
        let (bytes, response) = predict_bytes(&state.bundle, &request, state.policy)?;
        let stored = state.history.append(&state.fingerprint, &request, &response, now_ms())?;
        Ok::<_, Error>((bytes, stored.sequence))
    });
    match task.await {
        Ok(Ok((bytes, sequence))) => {
            let mut headers = HeaderMap::new();
            headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
            headers.insert("x-prediction-sequence", HeaderValue::from(sequence));
            (StatusCode::OK, headers, bytes).into_response()
        }
        Ok(Err(e)) => engine_error(&e),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), &[]),
    }
}

#[derive(Deserialize)]
struct ListParams {
    limit: Option<usize>,
}

async fn predictions(State(state): State<Arc<AppState>>, Query(params): Query<ListParams>) -> Response {
    let limit = params.limit.unwrap_or(50);
    Json(json!({
        "total": state.history.len(),
        "predictions": state.history.list(limit),
    }))
    .into_response()
}

async fn model(State(state): State<Arc<AppState>>) -> Response {
    let b = &state.bundle;
    Json(json!({
        "version": VERSION,
        "schema_version": b.schema_version,
        "fingerprint": state.fingerprint,
        "policy": state.policy,
        "feature_schema": b.feature_schema,
        "risk_bases": b.risk.base_names(),
        "outcome_bases": b.outcome.as_ref().map(|s| s.base_names()),
        "nomogram_predictors": b.nomogram.as_ref().map(|n| n.predictors.clone()),
        "metadata": {
            "seed": b.metadata.seed,
            "dataset_fingerprint": b.metadata.dataset_fingerprint,
            "created_at": b.metadata.created_at,
            "stages": b.metadata.stages,
        },
    }))
    .into_response()
}

#[derive(Deserialize)]
struct NomogramParams {
    format: Option<String>,
}

async fn nomogram(State(state): State<Arc<AppState>>, Query(params): Query<NomogramParams>, headers: HeaderMap) -> Response {
    let Some(n) = state.bundle.nomogram.as_ref() else {
        return engine_error(&Error::MissingStage("nomogram".into()));
    };
    let wants_svg = match params.format.as_deref() {
        Some("svg") => true,
        Some("json") | None => {
            params.format.is_none()
                && headers
                    .get(header::ACCEPT)
                    .and_then(|v| v.to_str().ok())
                    .is_some_and(|v| v.contains("image/svg+xml"))
        }
        Some(other) => {
            return error_response(
                StatusCode::BAD_REQUEST,
                format!("unknown format `{other}`; expected json or svg"),
                &["format".into()],
            )
        }
    };
    if wants_svg {
        ([(header::CONTENT_TYPE, "image/svg+xml")], n.to_svg()).into_response()
    } else {
        Json(n.to_export()).into_response()
    }
}

/// Binds and serves until interrupted.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
