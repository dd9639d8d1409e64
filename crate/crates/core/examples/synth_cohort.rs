//! Generates a synthetic cohort and writes the clinical table, image
//! features and the generating posteriors to a directory.
//!
//! cargo run --example synth_cohort -- <out-dir> [seed] [n]

use prognosis::dataset::LabelKind;
use prognosis::synth::{generate, write_synth, SynthSpec};

fn main() -> prognosis::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "synth-out".into());
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("seed"));
    let n: usize = args.next().map_or(930, |s| s.parse().expect("n"));
    let spec = SynthSpec::with_total(n, seed);
    let (cohort, truth) = generate(&spec)?;
    write_synth(&out, &cohort, &truth)?;

    let [low, high] = cohort.class_counts(LabelKind::Risk);
    let [survived, died] = cohort.class_counts(LabelKind::Outcome);
    println!("{} patients, {} image features each", cohort.len(), cohort.feature_length());
    println!("risk: {low} low / {high} high");
    println!("outcome among high risk: {survived} survived / {died} died");
    println!("biomarkers: {}", cohort.biomarker_names().join(", "));
    println!("written to {out}");
    Ok(())
}
