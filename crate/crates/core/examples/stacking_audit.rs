//! Builds out-of-fold predictions for the full candidate pool, picks the
//! three best, fits the stack and checks its leakage audit.
//!
//! cargo run --release --example stacking_audit -- [seed]

use prognosis::dataset::{stratified_folds, BalancePlan, LabelKind};
use prognosis::learners::candidate_pool;
use prognosis::pipeline::{Modality, ModalityInputs, PipelineConfig, Preprocessor};
use prognosis::stacking::{fit_stacking, generate_oof, rank_columns};
use prognosis::synth::{generate, SynthSpec};

fn main() -> prognosis::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(7, |s| s.parse().expect("seed"));
    let spec = SynthSpec {
        feature_length: 8,
        ..SynthSpec::with_total(400, seed)
    };
    let (cohort, _) = generate(&spec)?;
    let config = PipelineConfig::new(seed);
    let inputs = ModalityInputs::from_cohort(&cohort, &config.clinical_features, Modality::Clinical)?;
    let all: Vec<usize> = (0..cohort.len()).collect();
    // fitted on every row for brevity; the pipeline refits per fold
    let x = Preprocessor::fit(&inputs, &all, Modality::Clinical, &config)?.transform(&inputs)?;
    let y = cohort.labels(LabelKind::Risk)?;
    let folds = stratified_folds(&y, 10, seed)?;

    let pool = candidate_pool(seed);
    let oof = generate_oof(&pool, &x, &y, &folds, BalancePlan::RISK)?;
    oof.audit.verify()?;
    let names: Vec<String> = pool.iter().map(|s| s.name.clone()).collect();
    let selection = rank_columns(&names, &oof.scores, &y, 3)?;
    for s in &selection.scores {
        println!("{:<22} F1 {:.4}  accuracy {:.4}", s.name, s.f1, s.accuracy);
    }

    let chosen: Vec<_> = selection.chosen.iter().map(|&i| pool[i].clone()).collect();
    let model = fit_stacking(&chosen, &x, &y, &folds, BalancePlan::RISK)?;
    model.audit.verify()?;
    println!("\nstack of {}", chosen.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(" + "));
    println!("meta intercept {:+.4}", model.meta.intercept);
    for (s, w) in chosen.iter().zip(&model.meta.weights) {
        println!("  {:<22} {w:+.4}", s.name);
    }
    println!("audit: {} producers, no fold predicted by a model trained on it", model.audit.producer_count());
    Ok(())
}
