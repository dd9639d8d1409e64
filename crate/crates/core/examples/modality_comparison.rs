//! Cross-validates the stacking classifier on clinical, image and fused
//! inputs of a synthetic cohort and prints the weighted F1 of each.
//!
//! cargo run --release --example modality_comparison -- [seed] [n]

use std::time::Instant;

use prognosis::dataset::LabelKind;
use prognosis::pipeline::{crossval_run, Modality, PipelineConfig};
use prognosis::synth::{generate, SynthSpec};

fn main() -> prognosis::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("seed"));
    let n: usize = args.next().map_or(900, |s| s.parse().expect("n"));
    let spec = SynthSpec {
        feature_length: 128,
        ..SynthSpec::with_total(n, seed)
    };
    let (cohort, _) = generate(&spec)?;
    let mut config = PipelineConfig::new(seed);
    config.pca.components = 16;
    for m in Modality::ALL {
        let t = Instant::now();
        let cv = crossval_run(&cohort, &config, m, LabelKind::Risk)?;
        println!(
            "{:<9} {:<60} F1 {:.4}  AUC {:.4}  ({:.1}s)",
            m.as_str(),
            cv.stacking_name(),
            cv.stacking.evaluation.report.f1.value,
            cv.stacking.evaluation.report.auc.unwrap_or(f64::NAN),
            t.elapsed().as_secs_f64()
        );
        for c in &cv.candidates {
            println!("    {:<22} F1 {:.4}", c.name, c.evaluation.report.f1.value);
        }
    }
    Ok(())
}
