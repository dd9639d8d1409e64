//! Cross-validates every candidate and the stack on fused inputs, then
//! writes ROC, calibration and decision-curve charts as SVG.
//!
//! cargo run --release --example evaluation_curves -- [out-dir] [seed]

use std::path::PathBuf;

use prognosis::dataset::LabelKind;
use prognosis::evaluation::{calibration_svg, decision_svg, roc_svg, write_report_csv};
use prognosis::pipeline::{crossval_run, Modality, PipelineConfig};
use prognosis::synth::{generate, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "curves-out".into()));
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("seed"));
    std::fs::create_dir_all(&out)?;

    let spec = SynthSpec {
        feature_length: 64,
        ..SynthSpec::with_total(600, seed)
    };
    let (cohort, _) = generate(&spec)?;
    let mut config = PipelineConfig::new(seed);
    config.pca.components = 12;
    let cv = crossval_run(&cohort, &config, Modality::Fused, LabelKind::Risk)?;
    cv.audit.verify()?;

    let results: Vec<_> = cv.candidates.iter().chain([&cv.stacking]).collect();
    let roc: Vec<_> = results.iter().map(|r| (r.name.as_str(), &r.evaluation.roc)).collect();
    let cal: Vec<_> = results.iter().map(|r| (r.name.as_str(), &r.evaluation.calibration)).collect();
    let dca: Vec<_> = results.iter().map(|r| (r.name.as_str(), &r.evaluation.decision)).collect();
    std::fs::write(out.join("roc.svg"), roc_svg("ROC, fused inputs", &roc))?;
    std::fs::write(out.join("calibration.svg"), calibration_svg("Calibration", &cal))?;
    std::fs::write(out.join("decision.svg"), decision_svg("Net benefit", &dca))?;
    write_report_csv(&cv.report_rows(), std::io::stdout().lock())?;
    eprintln!("charts in {}", out.display());
    Ok(())
}
