//! Scores one patient on the reference three-score nomogram, draws the
//! chart, and refits a nomogram with bootstrap standard errors on simulated
//! scores.
//!
//! cargo run --example nomogram_chart -- [svg-path]

use prognosis::nomogram::{fit_nomogram, FitConfig, NomogramModel};
use prognosis::{rng, Matrix};
use rand::Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "nomogram.svg".into());
    let model = NomogramModel::reference();
    let s = model.score(&[0.9, 0.8, 0.7])?;
    println!("linear prediction {:.5}, death probability {:.4e}", s.linear_prediction, s.probability);
    for (name, pts) in model.predictors.iter().zip(&s.points) {
        println!("  {name:<24} {pts:6.1} points");
    }
    println!("  total {:.1} points -> {:?}", s.total_points, s.classification);
    std::fs::write(&path, model.to_svg())?;
    println!("chart written to {path}");

    let truth = [-2.0, 3.0, 1.5, -1.0];
    let mut r = rng::seeded(11);
    let n = 500;
    let mut x = Matrix::zeros(n, 3);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let mut lp = truth[0];
        for j in 0..3 {
            let v: f64 = r.random();
            x.set(i, j, v);
            lp += truth[j + 1] * v;
        }
        y.push(r.random::<f64>() < 1.0 / (1.0 + (-lp).exp()));
    }
    let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let fit = fit_nomogram(&x, &y, &names, &FitConfig { bootstrap: 200, seed: 3, lambda: 0.0 })?;
    println!("\nrefit on {n} simulated patients");
    for (t, want) in fit.inference.as_ref().expect("bootstrap requested").terms.iter().zip(truth) {
        let (lo, hi) = t.ci();
        println!("  {:<10} {:+.3} (se {:.3}, 95% CI {lo:+.3}..{hi:+.3}, p {:.2e}) truth {want:+.1}", t.name, t.estimate, t.se, t.p_value());
    }
    Ok(())
}
