use std::collections::BTreeMap;
use std::sync::Arc;

use prognosis::bundle::{train_bundle, BundleConfig, ModelBundle, StageSummary, BUNDLE_SCHEMA_VERSION};
use prognosis::dataset::{Cohort, LabelKind, PatientRecord, RiskLabel};
use prognosis::history::{replay, HistoryStore};
use prognosis::pipeline::{train_outcome, train_stage};
use prognosis::predict::{predict, MissingPolicy, PredictRequest, PredictResponse};
use prognosis::synth::{generate, SynthSpec};
use prognosis::Error;

fn request_for(cohort: &Cohort, rec: &PatientRecord, wanted: &[String]) -> PredictRequest {
    let biomarkers: BTreeMap<String, Option<f64>> = cohort
        .biomarker_names()
        .iter()
        .cloned()
        .zip(rec.biomarkers.iter().copied())
        .filter(|(name, _)| wanted.contains(name))
        .collect();
    PredictRequest {
        gender: Some(rec.gender.as_str().to_string()),
        age: rec.age,
        biomarkers,
        image_features: rec.image_features.clone(),
        image: None,
    }
}

fn small_bundle() -> (Cohort, ModelBundle) {
    let spec = SynthSpec { feature_length: 24, ..SynthSpec::with_total(300, 5) };
    let (cohort, _) = generate(&spec).unwrap();
    let mut config = BundleConfig::new(5);
    config.pipeline.pca.components = 6;
    let (bundle, _) = train_bundle(&cohort, &config).unwrap();
    (cohort, bundle)
}

fn answers(bundle: &ModelBundle, requests: &[PredictRequest]) -> Vec<PredictResponse> {
    requests.iter().map(|q| predict(bundle, q, MissingPolicy::Impute).unwrap()).collect()
}

#[test]
fn trained_bundle_survives_a_disk_round_trip() {
    let (cohort, bundle) = small_bundle();
    let wanted = bundle.feature_schema.names();
    let requests: Vec<PredictRequest> = cohort.records().iter().step_by(7).map(|r| request_for(&cohort, r, &wanted)).collect();
    let before = answers(&bundle, &requests);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bundle.json");
    bundle.save(&path).unwrap();
    let loaded = ModelBundle::load(&path).unwrap();
    assert_eq!(loaded, bundle);
    assert_eq!(loaded.fingerprint().unwrap(), bundle.fingerprint().unwrap());
    assert_eq!(loaded.to_json().unwrap(), std::fs::read(&path).unwrap());

    let after = answers(&loaded, &requests);
    assert_eq!(before, after);
    for r in &after {
        assert_eq!(r.death.is_some(), r.risk.class == RiskLabel::High);
        assert!((0.0..=1.0).contains(&r.risk.probability));
        if let Some(d) = &r.death {
            assert!((0.0..=1.0).contains(&d.probability));
            let total: f64 = d.predictors.iter().map(|p| p.points).sum();
            assert!((total - d.total_points).abs() < 1e-9);
        }
    }
}

#[test]
fn other_schema_versions_are_refused() {
    let bundle = ModelBundle::fixture(0.9).unwrap();
    let mut v: serde_json::Value = serde_json::from_slice(&bundle.to_json().unwrap()).unwrap();
    v["schema_version"] = serde_json::json!(BUNDLE_SCHEMA_VERSION + 1);
    let bytes = serde_json::to_vec(&v).unwrap();
    match ModelBundle::from_json(&bytes) {
        Err(Error::SchemaVersion { found, expected }) => {
            assert_eq!((found, expected), (BUNDLE_SCHEMA_VERSION + 1, BUNDLE_SCHEMA_VERSION));
        }
        other => panic!("expected a version error, got {other:?}"),
    }
}

fn fixture_request() -> PredictRequest {
    let biomarkers = [("ldh", 320.0), ("o2", 93.0), ("wbc", 8.1), ("crp", 40.0)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), Some(v)))
        .collect();
    PredictRequest {
        gender: Some("female".into()),
        age: Some(61.0),
        biomarkers,
        ..PredictRequest::default()
    }
}

#[test]
fn history_replay_reconstructs_the_listing() {
    let bundle = ModelBundle::fixture(0.9).unwrap();
    let fp = bundle.fingerprint().unwrap();
    let response = predict(&bundle, &fixture_request(), MissingPolicy::Strict).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.jsonl");

    let store = HistoryStore::open(&path).unwrap();
    assert!(store.is_empty());
    for t in 0..5 {
        store.append(&fp, &fixture_request(), &response, 1_000 + t).unwrap();
    }
    let listing = store.list(usize::MAX);
    drop(store);

    let reopened = HistoryStore::open(&path).unwrap();
    assert_eq!(reopened.list(usize::MAX), listing);
    assert_eq!(reopened.list(2), listing[..2]);
    let mut replayed = replay(&path).unwrap();
    replayed.reverse();
    assert_eq!(replayed, listing);
    assert_eq!(listing.iter().map(|r| r.sequence).collect::<Vec<_>>(), [5, 4, 3, 2, 1]);

    let next = reopened.append(&fp, &fixture_request(), &response, 2_000).unwrap();
    assert_eq!(next.sequence, 6);
}

#[test]
fn tampered_history_is_detected() {
    let bundle = ModelBundle::fixture(0.9).unwrap();
    let response = predict(&bundle, &fixture_request(), MissingPolicy::Strict).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.jsonl");
    let store = HistoryStore::open(&path).unwrap();
    store.append("abc", &fixture_request(), &response, 1).unwrap();
    drop(store);

    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replace("\"bundle_fingerprint\":\"abc\"", "\"bundle_fingerprint\":\"abd\"")).unwrap();
    assert!(matches!(replay(&path), Err(Error::Malformed { row: 1, .. })));
}

#[test]
fn concurrent_appends_get_distinct_sequences() {
    let bundle = ModelBundle::fixture(0.2).unwrap();
    let response = predict(&bundle, &fixture_request(), MissingPolicy::Strict).unwrap();
    assert!(response.death.is_none());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.jsonl");
    let store = Arc::new(HistoryStore::open(&path).unwrap());
    let handles: Vec<_> = (0..4)
        .map(|t| {
            let (store, response) = (Arc::clone(&store), response.clone());
            std::thread::spawn(move || {
                for i in 0..25 {
                    store.append("fp", &fixture_request(), &response, t * 100 + i).unwrap();
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    let mut seq: Vec<u64> = replay(&path).unwrap().iter().map(|r| r.sequence).collect();
    assert_eq!(seq, (1..=100).collect::<Vec<_>>());
    seq.dedup();
    assert_eq!(seq.len(), 100);
}

#[test]
fn stages_trained_separately_assemble_the_same_bundle() {
    let spec = SynthSpec { feature_length: 24, ..SynthSpec::with_total(300, 5) };
    let (cohort, _) = generate(&spec).unwrap();
    let mut config = BundleConfig::new(5);
    config.pipeline.pca.components = 6;
    let (whole, _) = train_bundle(&cohort, &config).unwrap();

    let (risk, risk_cv) = train_stage(&cohort, &config.pipeline, config.modality, LabelKind::Risk).unwrap();
    let (outcome, nomogram, outcome_cv) = train_outcome(&cohort, &config.pipeline, config.modality, &config.nomogram).unwrap();
    let stages = vec![StageSummary::from_cv(&risk_cv), StageSummary::from_cv(&outcome_cv)];
    let split = ModelBundle::assemble(&cohort, &config, risk, outcome, nomogram, stages).unwrap();
    assert_eq!(split.to_json().unwrap(), whole.to_json().unwrap());
}
