//! Baseline characteristics of a synthetic cohort by risk class, with a
//! Fisher or rank-sum test per variable. Prints CSV.
//!
//! cargo run --example cohort_profile -- [seed]

use prognosis::dataset::LabelKind;
use prognosis::evaluation::profile;
use prognosis::synth::{generate, SynthSpec};

fn main() -> prognosis::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(7, |s| s.parse().expect("seed"));
    let spec = SynthSpec {
        feature_length: 8,
        ..SynthSpec::with_total(930, seed)
    };
    let (cohort, _) = generate(&spec)?;
    let p = profile(&cohort, LabelKind::Risk)?;
    eprintln!("classes: {:?}", p.class_counts);
    p.write_csv(std::io::stdout().lock())
}
