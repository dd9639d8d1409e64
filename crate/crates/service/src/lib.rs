//! HTTP service and command-line driver for the prognosis engine.

pub mod cli;
pub mod config;
pub mod server;

use std::path::Path;

use prognosis::bundle::{canonical_json, ModelBundle};
use prognosis::dataset::{load_clinical_csv, load_image_csv, sniff_schema, Cohort};
use prognosis::predict::{predict, MissingPolicy, PredictRequest, PredictResponse};

/// Canonical JSON of a prediction; the service and the CLI both answer
/// with exactly these bytes.
pub fn predict_bytes(
    bundle: &ModelBundle,
    request: &PredictRequest,
    policy: MissingPolicy,
) -> prognosis::Result<(Vec<u8>, PredictResponse)> {
    let response = predict(bundle, request, policy)?;
    Ok((canonical_json(&response)?, response))
}

/// Loads a clinical CSV, taking the biomarker schema from its header, and
/// attaches image features when a second file is given.
pub fn load_cohort(clinical: &Path, images: Option<&Path>) -> prognosis::Result<Cohort> {
    let schema = sniff_schema(clinical)?;
    let cohort = load_clinical_csv(clinical, &schema)?;
    match images {
        Some(p) => cohort.with_image_features(load_image_csv(p)?),
        None => Ok(cohort),
    }
}
