//! Ranks clinical variables with forest importance, then cross-validates
//! gradient boosting on the top k for each k.
//!
//! cargo run --release --example feature_sweep -- [gini|permutation] [seed]

use prognosis::dataset::LabelKind;
use prognosis::feature_select::{topk_sweep, ImportanceMethod};
use prognosis::learners::{ForestParams, LearnerSpec};
use prognosis::pipeline::{clinical_cv_report, clinical_variables, rank_clinical};
use prognosis::synth::{generate, SynthSpec};

fn main() -> prognosis::Result<()> {
    let mut args = std::env::args().skip(1);
    let method = match args.next().as_deref() {
        None | Some("gini") => ImportanceMethod::Gini,
        Some("permutation") => ImportanceMethod::Permutation,
        Some(other) => panic!("unknown importance {other}"),
    };
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("seed"));
    let spec = SynthSpec {
        feature_length: 8,
        ..SynthSpec::with_total(600, seed)
    };
    let (cohort, _) = generate(&spec)?;
    let vars = clinical_variables(&cohort);
    let ranking = rank_clinical(&cohort, LabelKind::Risk, &vars, ForestParams::default(), method, seed)?;
    for (name, score) in &ranking.features {
        println!("{name:<14} {score:.4}");
    }

    let learner = LearnerSpec::gradient_boosting(seed);
    let k_max = vars.len().min(8);
    let sweep = topk_sweep(&ranking, 1..=k_max, &learner.name, |features| {
        clinical_cv_report(&cohort, LabelKind::Risk, features, &learner, 5, seed)
    })?;
    println!();
    for row in &sweep.rows {
        println!("k={:<2} F1 {:.4} ± {:.4}", row.k, row.report.f1.value, row.report.f1.ci);
    }
    println!("best k = {}", sweep.best_k);
    Ok(())
}
