//! Drives the HTTP API in process against the fixture bundle: health,
//! model schema, one prediction and the history listing.
//!
//! cargo run -p prognosis-service --example api_walkthrough

use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use prognosis::bundle::ModelBundle;
use prognosis::history::HistoryStore;
use prognosis::predict::MissingPolicy;
use prognosis_service::server::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, request: Request<Body>) -> (StatusCode, Value) {
    let response = app.clone().oneshot(request).await.expect("infallible");
    let status = response.status();
    let bytes = to_bytes(response.into_body(), usize::MAX).await.expect("body");
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

#[tokio::main(flavor = "current_thread")]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let history = HistoryStore::open(dir.path().join("history.jsonl"))?;
    let state = AppState::new(ModelBundle::fixture(0.9)?, history, MissingPolicy::Impute)?;
    let app = router(Arc::new(state));

    let (status, body) = call(&app, get("/healthz")).await;
    println!("GET /healthz -> {status} {body}");
    let (_, model) = call(&app, get("/api/v1/model")).await;
    println!("feature schema: {}", model["feature_schema"]);

    let patient = json!({
        "gender": "male",
        "age": 71,
        "biomarkers": { "ldh": 410.0, "o2": 89.0, "wbc": 11.2, "crp": null }
    });
    let request = Request::post("/api/v1/predict")
        .header("content-type", "application/json")
        .body(Body::from(patient.to_string()))?;
    let (status, body) = call(&app, request).await;
    println!("POST /api/v1/predict -> {status}\n{}", serde_json::to_string_pretty(&body)?);

    let (_, listing) = call(&app, get("/api/v1/predictions?limit=5")).await;
    println!("history: {listing}");
    Ok(())
}
