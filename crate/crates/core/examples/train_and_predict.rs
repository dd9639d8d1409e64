//! Trains both stages into a bundle, saves it, reloads it and scores a few
//! patients.
//!
//! cargo run --release --example train_and_predict -- [bundle-path] [seed]

use std::collections::BTreeMap;

use prognosis::bundle::{train_bundle, BundleConfig, ModelBundle};
use prognosis::predict::{predict, MissingPolicy, PredictRequest};
use prognosis::synth::{generate, SynthSpec};

fn main() -> prognosis::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "bundle.json".into());
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("seed"));
    let spec = SynthSpec {
        feature_length: 64,
        ..SynthSpec::with_total(600, seed)
    };
    let (cohort, _) = generate(&spec)?;
    let mut config = BundleConfig::new(seed);
    config.pipeline.pca.components = 12;
    let (bundle, report) = train_bundle(&cohort, &config)?;
    println!("stage 1: {} F1 {:.3}", report.risk.stacking_name(), report.risk.stacking.evaluation.report.f1.value);
    println!("stage 2: {} F1 {:.3}", report.outcome.stacking_name(), report.outcome.stacking.evaluation.report.f1.value);
    bundle.save(&path)?;
    let bundle = ModelBundle::load(&path)?;
    println!("bundle {} saved to {path}", &bundle.fingerprint()?[..12]);

    let wanted = bundle.feature_schema.names();
    for rec in cohort.records().iter().take(5) {
        let biomarkers: BTreeMap<String, Option<f64>> = cohort
            .biomarker_names()
            .iter()
            .cloned()
            .zip(rec.biomarkers.iter().copied())
            .filter(|(name, _)| wanted.contains(name))
            .collect();
        let request = PredictRequest {
            gender: Some(rec.gender.as_str().into()),
            age: rec.age,
            biomarkers,
            image_features: rec.image_features.clone(),
            image: None,
        };
        let r = predict(&bundle, &request, MissingPolicy::Impute)?;
        let death = r.death.as_ref().map_or("-".to_string(), |d| format!("{:.3}", d.probability));
        println!(
            "{}: risk {:?} ({:.3}), death probability {death}, imputed {:?}",
            rec.id, r.risk.class, r.risk.probability, r.imputed
        );
    }
    Ok(())
}
