//! Logistic nomogram over base-learner probability scores.
//!
//! The linear predictor is `b0 + sum_j b_j m_j` and the event probability its
//! sigmoid. Points put every predictor on a shared 0–100 scale: the predictor
//! with the widest effect `|b_j| * width_j` spans exactly 100 points and the
//! others are scaled in proportion, so total points are an affine function of
//! the linear predictor.

use std::fmt::Write as _;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::Outcome;
use crate::error::{Error, Result};
use crate::evaluation::metrics::Z95;
use crate::learners::logistic::{fit_logistic, LogisticParams};
use crate::matrix::{sigmoid, Matrix};
use crate::rng;
use crate::svg::escape;

const REFERENCE_JSON: &str = include_str!("../fixtures/reference_nomogram.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermInference {
    pub name: String,
    pub estimate: f64,
    /// Bootstrap standard error.
    pub se: f64,
}

impl TermInference {
    pub fn z(&self) -> f64 {
        self.estimate / self.se
    }

    /// Two-sided normal tail probability of `z`.
    pub fn p_value(&self) -> f64 {
        2.0 * Normal::standard().sf(self.z().abs())
    }

    pub fn ci(&self) -> (f64, f64) {
        (self.estimate - Z95 * self.se, self.estimate + Z95 * self.se)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub resamples: Option<usize>,
    pub seed: Option<u64>,
    /// Resamples skipped because they held one class or were separable.
    pub failed_resamples: usize,
    /// Intercept first, then one entry per predictor.
    pub terms: Vec<TermInference>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NomogramModel {
    pub intercept: f64,
    pub predictors: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Admissible value range per predictor.
    pub ranges: Vec<(f64, f64)>,
    pub points_scale: f64,
    pub cutoff: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inference: Option<Inference>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub bootstrap: usize,
    pub seed: u64,
    /// Ridge penalty; 0 is plain maximum likelihood.
    pub lambda: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            bootstrap: 1000,
            seed: 0,
            lambda: 0.0,
        }
    }
}

/// One predictor's point scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointAxis {
    pub name: String,
    pub coefficient: f64,
    pub range: (f64, f64),
    /// Range end that scores zero points.
    pub zero_at: f64,
    pub max_points: f64,
    /// Sampled (value, points) polyline, increasing in value.
    pub ticks: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NomogramAxes {
    pub points_scale: f64,
    pub predictors: Vec<PointAxis>,
    pub max_total_points: f64,
    /// Linear predictor when every predictor scores zero points.
    pub base_linear_prediction: f64,
    /// Linear-predictor units per point.
    pub lp_per_point: f64,
    /// Sampled (total points, probability) polyline.
    pub probability: Vec<(f64, f64)>,
    /// Total points at which the probability reaches the cutoff, if inside
    /// the attainable range.
    pub cutoff_points: Option<f64>,
    pub cutoff: f64,
}

/// Per-prediction breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub linear_prediction: f64,
    pub probability: f64,
    pub points: Vec<f64>,
    pub total_points: f64,
    pub classification: Outcome,
}

impl NomogramModel {
    /// The reference three-score death nomogram.
    pub fn reference() -> Self {
        let m: NomogramModel = serde_json::from_str(REFERENCE_JSON).expect("bundled nomogram fixture parses");
        m.validate().expect("bundled nomogram fixture is valid");
        m
    }

    pub fn new(intercept: f64, predictors: Vec<String>, coefficients: Vec<f64>) -> Result<Self> {
        let n = coefficients.len();
        let m = Self {
            intercept,
            predictors,
            coefficients,
            ranges: vec![(0.0, 1.0); n],
            points_scale: 100.0,
            cutoff: 0.5,
            inference: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Result<Self> {
        self.cutoff = cutoff;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.coefficients.len();
        if self.predictors.len() != k || self.ranges.len() != k {
            return Err(Error::Shape(format!(
                "{} predictors, {} coefficients, {} ranges",
                self.predictors.len(),
                k,
                self.ranges.len()
            )));
        }
        if !self.intercept.is_finite() || self.coefficients.iter().any(|b| !b.is_finite()) {
            return Err(Error::Numerical("nomogram coefficients must be finite".into()));
        }
        if self.ranges.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidParameter("each predictor range needs lo < hi".into()));
        }
        // 0 and 1 are accepted as degenerate always/never rules
        if !(0.0..=1.0).contains(&self.cutoff) {
            return Err(Error::OutOfRange {
                name: "cutoff".into(),
                value: self.cutoff,
                lo: 0.0,
                hi: 1.0,
            });
        }
        if !(self.points_scale > 0.0) {
            return Err(Error::InvalidParameter("points scale must be positive".into()));
        }
        Ok(())
    }

    fn check(&self, scores: &[f64]) -> Result<()> {
        if scores.len() != self.coefficients.len() {
            return Err(Error::Dimension {
                expected: self.coefficients.len(),
                found: scores.len(),
            });
        }
        for ((v, (lo, hi)), name) in scores.iter().zip(&self.ranges).zip(&self.predictors) {
            if !(*lo..=*hi).contains(v) {
                return Err(Error::OutOfRange {
                    name: name.clone(),
                    value: *v,
                    lo: *lo,
                    hi: *hi,
                });
            }
        }
        Ok(())
    }

    pub fn linear_prediction(&self, scores: &[f64]) -> Result<f64> {
        self.check(scores)?;
        Ok(self.intercept + self.coefficients.iter().zip(scores).map(|(b, m)| b * m).sum::<f64>())
    }

    pub fn death_probability(&self, scores: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.linear_prediction(scores)?))
    }

    /// Death when the probability reaches the cutoff (inclusive).
    pub fn classify(&self, scores: &[f64]) -> Result<Outcome> {
        Ok(self.classify_probability(self.death_probability(scores)?))
    }

    pub fn classify_probability(&self, p: f64) -> Outcome {
        if p >= self.cutoff {
            Outcome::Death
        } else {
            Outcome::Survived
        }
    }

    fn zero_end(&self, j: usize) -> f64 {
        let (lo, hi) = self.ranges[j];
        if self.coefficients[j] >= 0.0 {
            lo
        } else {
            hi
        }
    }

    /// Largest single-predictor effect `|b_j| * width_j`.
    fn widest_effect(&self) -> f64 {
        self.coefficients
            .iter()
            .zip(&self.ranges)
            .map(|(b, (lo, hi))| b.abs() * (hi - lo))
            .fold(0.0, f64::max)
    }

    fn base_lp(&self) -> f64 {
        self.intercept + (0..self.coefficients.len()).map(|j| self.coefficients[j] * self.zero_end(j)).sum::<f64>()
    }

    fn points_of(&self, j: usize, value: f64, widest: f64) -> f64 {
        if widest == 0.0 {
            return 0.0;
        }
        self.points_scale * self.coefficients[j].abs() * (value - self.zero_end(j)).abs() / widest
    }

    /// Points per predictor for one patient.
    pub fn points(&self, scores: &[f64]) -> Result<Vec<f64>> {
        self.check(scores)?;
        let widest = self.widest_effect();
        Ok(scores.iter().enumerate().map(|(j, &v)| self.points_of(j, v, widest)).collect())
    }

    /// Inverts total points to the linear predictor.
    pub fn total_points_to_lp(&self, total: f64) -> f64 {
        self.base_lp() + total * self.widest_effect() / self.points_scale
    }

    pub fn total_points_to_probability(&self, total: f64) -> f64 {
        sigmoid(self.total_points_to_lp(total))
    }

    pub fn score(&self, scores: &[f64]) -> Result<Scored> {
        let lp = self.linear_prediction(scores)?;
        let points = self.points(scores)?;
        let p = sigmoid(lp);
        Ok(Scored {
            linear_prediction: lp,
            probability: p,
            total_points: points.iter().sum(),
            points,
            classification: self.classify_probability(p),
        })
    }

    /// Axis layout with `samples` ticks per predictor and on the probability
    /// axis.
    pub fn points_axes_sampled(&self, samples: usize) -> NomogramAxes {
        let samples = samples.max(2);
        let widest = self.widest_effect();
        let predictors: Vec<PointAxis> = (0..self.coefficients.len())
            .map(|j| {
                let (lo, hi) = self.ranges[j];
                let ticks = (0..samples)
                    .map(|s| {
                        let v = lo + (hi - lo) * s as f64 / (samples - 1) as f64;
                        (v, self.points_of(j, v, widest))
                    })
                    .collect();
                PointAxis {
                    name: self.predictors[j].clone(),
                    coefficient: self.coefficients[j],
                    range: (lo, hi),
                    zero_at: self.zero_end(j),
                    max_points: self.points_of(j, if self.zero_end(j) == lo { hi } else { lo }, widest),
                    ticks,
                }
            })
            .collect();
        let max_total: f64 = predictors.iter().map(|a| a.max_points).sum();
        let probability = (0..samples)
            .map(|s| {
                let t = max_total * s as f64 / (samples - 1) as f64;
                (t, self.total_points_to_probability(t))
            })
            .collect();
        let lp_per_point = widest / self.points_scale;
        let target = (self.cutoff / (1.0 - self.cutoff)).ln();
        let cutoff_points = if lp_per_point > 0.0 {
            let t = (target - self.base_lp()) / lp_per_point;
            (t.is_finite() && (0.0..=max_total).contains(&t)).then_some(t)
        } else {
            None
        };
        NomogramAxes {
            points_scale: self.points_scale,
            predictors,
            max_total_points: max_total,
            base_linear_prediction: self.base_lp(),
            lp_per_point,
            probability,
            cutoff_points,
            cutoff: self.cutoff,
        }
    }

    pub fn points_axes(&self) -> NomogramAxes {
        self.points_axes_sampled(11)
    }

    /// Machine-readable export: coefficients, inference summary and axes.
    pub fn to_export(&self) -> NomogramExport {
        NomogramExport {
            intercept: self.intercept,
            predictors: self.predictors.clone(),
            coefficients: self.coefficients.clone(),
            cutoff: self.cutoff,
            inference: self.inference.as_ref().map(|inf| {
                inf.terms
                    .iter()
                    .map(|t| {
                        let (lo, hi) = t.ci();
                        TermSummary {
                            name: t.name.clone(),
                            estimate: t.estimate,
                            se: t.se,
                            z: t.z(),
                            p_value: t.p_value(),
                            ci_low: lo,
                            ci_high: hi,
                        }
                    })
                    .collect()
            }),
            axes: self.points_axes(),
        }
    }

    /// Row layout: a points ruler, one axis per predictor, total points and
    /// the probability scale beneath it.
    pub fn to_svg(&self) -> String {
        render_svg(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSummary {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NomogramExport {
    pub intercept: f64,
    pub predictors: Vec<String>,
    pub coefficients: Vec<f64>,
    pub cutoff: f64,
    pub inference: Option<Vec<TermSummary>>,
    pub axes: NomogramAxes,
}

/// Maximum-likelihood fit on a matrix of scores with bootstrap inference.
pub fn fit_nomogram(
    scores: &Matrix,
    outcome: &[bool],
    predictors: &[String],
    config: &FitConfig,
) -> Result<NomogramModel> {
    let n = scores.rows();
    if n < 10 {
        return Err(Error::InvalidParameter(format!("{n} rows given; the nomogram needs at least 10")));
    }
    if predictors.len() != scores.cols() {
        return Err(Error::Shape(format!("{} names for {} score columns", predictors.len(), scores.cols())));
    }
    if outcome.iter().all(|&y| y) || outcome.iter().all(|&y| !y) {
        return Err(Error::SingleClass);
    }
    let beta = fit_once(scores, outcome, config.lambda)?;
    let mut model = NomogramModel::new(beta[0], predictors.to_vec(), beta[1..].to_vec())?;
    if config.bootstrap > 0 {
        let draws: Vec<Option<Vec<f64>>> = (0..config.bootstrap)
            .into_par_iter()
            .map(|b| {
                let mut r = rng::substream(config.seed, b as u64);
                let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
                let y: Vec<bool> = idx.iter().map(|&i| outcome[i]).collect();
                fit_once(&scores.select_rows(&idx), &y, config.lambda).ok()
            })
            .collect();
        let ok: Vec<&Vec<f64>> = draws.iter().flatten().collect();
        if ok.len() < 2 {
            return Err(Error::Numerical("fewer than two usable bootstrap resamples".into()));
        }
        let mut names = vec!["intercept".to_string()];
        names.extend(predictors.iter().cloned());
        let terms = names
            .into_iter()
            .enumerate()
            .map(|(j, name)| {
                let vals: Vec<f64> = ok.iter().map(|b| b[j]).collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() - 1) as f64;
                TermInference {
                    name,
                    estimate: beta[j],
                    se: var.sqrt(),
                }
            })
            .collect();
        model.inference = Some(Inference {
            resamples: Some(config.bootstrap),
            seed: Some(config.seed),
            failed_resamples: config.bootstrap - ok.len(),
            terms,
        });
    }
    Ok(model)
}

/// `[b0, b1, ...]`, or an error on one-class or separable data.
fn fit_once(x: &Matrix, y: &[bool], lambda: f64) -> Result<Vec<f64>> {
    let w = vec![1.0; y.len()];
    let params = LogisticParams {
        lambda,
        max_iter: 100,
        tol: 1e-10,
    };
    let m = fit_logistic(x, y, &w, &params)?;
    if lambda == 0.0 {
        let all_fit = x.iter_rows().zip(y).all(|(r, &l)| {
            let p = m.probability(r);
            if l {
                p > 1.0 - 1e-8
            } else {
                p < 1e-8
            }
        });
        if !m.converged || all_fit {
            return Err(Error::PerfectSeparation);
        }
    }
    let mut beta = vec![m.intercept];
    beta.extend(m.weights);
    Ok(beta)
}

fn render_svg(m: &NomogramModel) -> String {
    let axes = m.points_axes();
    let (left, right) = (170.0, 760.0);
    let span = right - left;
    let row_h = 56.0;
    let rows = axes.predictors.len() + 3;
    let height = 40.0 + row_h * rows as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="{height}" viewBox="0 0 800 {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let mut y = 40.0;
    let axis = |s: &mut String, label: &str, y: f64, ticks: &[(f64, String)]| {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 12.0, y + 4.0, escape(label));
        if let (Some(a), Some(b)) = (ticks.first(), ticks.last()) {
            let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y}" x2="{:.2}" y2="{y}" stroke="black"/>"#, a.0, b.0);
        }
        for (x, text) in ticks {
            let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{y}" x2="{x:.2}" y2="{}" stroke="black"/>"#, y - 6.0);
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, y - 10.0, escape(text));
        }
    };
    let scale = axes.points_scale;
    let pts_x = |p: f64| left + span * p / scale;
    let ruler: Vec<(f64, String)> = (0..=10).map(|i| (pts_x(scale * i as f64 / 10.0), format!("{}", scale * i as f64 / 10.0))).collect();
    axis(&mut s, "Points", y, &ruler);
    y += row_h;
    for a in &axes.predictors {
        let ticks: Vec<(f64, String)> = a.ticks.iter().map(|&(v, p)| (pts_x(p), format!("{v:.1}"))).collect();
        axis(&mut s, &a.name, y, &ticks);
        y += row_h;
    }
    let max_total = axes.max_total_points.max(f64::MIN_POSITIVE);
    let tot_x = |t: f64| left + span * t / max_total;
    let totals: Vec<(f64, String)> = (0..=10)
        .map(|i| {
            let t = max_total * i as f64 / 10.0;
            (tot_x(t), format!("{t:.0}"))
        })
        .collect();
    axis(&mut s, "Total points", y, &totals);
    y += row_h;
    let probs: Vec<(f64, String)> = axes
        .probability
        .iter()
        .map(|&(t, p)| (tot_x(t), format!("{p:.2}")))
        .collect();
    axis(&mut s, "Probability", y, &probs);
    if let Some(c) = axes.cutoff_points {
        let x = tot_x(c);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="red" stroke-dasharray="4 3"/>"#,
            y - row_h - 14.0,
            y + 8.0
        );
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle" fill="red">cutoff {}</text>"#, y + 22.0, axes.cutoff);
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_linear_prediction() {
        let m = NomogramModel::reference();
        assert_eq!(m.linear_prediction(&[0.0, 0.0, 0.0]).unwrap(), 11.23907);
        let lp = m.linear_prediction(&[0.9, 0.8, 0.7]).unwrap();
        assert!((lp + 7.40335).abs() < 1e-9);
        let lp1 = m.linear_prediction(&[1.0, 1.0, 1.0]).unwrap();
        assert!((lp1 + 10.430923).abs() < 1e-9);
    }

    #[test]
    fn reference_axes() {
        let ax = NomogramModel::reference().points_axes();
        let max: Vec<f64> = ax.predictors.iter().map(|a| a.max_points).collect();
        assert_eq!(max[0], 100.0);
        assert!((max[1] - 33.85).abs() < 5e-3);
        assert!((max[2] - 12.04).abs() < 5e-3);
        let c = ax.cutoff_points.unwrap();
        let m = NomogramModel::reference();
        assert!((m.total_points_to_probability(c) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_scores_rejected() {
        let m = NomogramModel::reference();
        assert!(matches!(m.linear_prediction(&[1.2, 0.0, 0.0]), Err(Error::OutOfRange { .. })));
        assert!(matches!(m.linear_prediction(&[0.5, 0.5]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn cutoff_is_inclusive() {
        let m = NomogramModel::new(0.0, vec!["a".into()], vec![1.0]).unwrap();
        assert_eq!(m.classify(&[0.0]).unwrap(), Outcome::Death);
        let always = m.clone().with_cutoff(0.0).unwrap();
        assert_eq!(always.classify(&[0.0]).unwrap(), Outcome::Death);
        assert_eq!(
            NomogramModel::reference().classify(&[0.9, 0.8, 0.7]).unwrap(),
            Outcome::Survived
        );
    }

    #[test]
    fn zero_point_corner() {
        let m = NomogramModel::reference();
        let s = m.score(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(s.total_points, 0.0);
        assert!((s.probability - sigmoid(-10.430923)).abs() < 1e-12);
    }

    #[test]
    fn separable_data_reported() {
        let rows: Vec<[f64; 1]> = (0..20).map(|i| [i as f64 / 20.0]).collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let r = fit_nomogram(&x, &y, &["m1".into()], &FitConfig { bootstrap: 0, ..Default::default() });
        assert!(matches!(r, Err(Error::PerfectSeparation)));
        let ridge = FitConfig {
            bootstrap: 0,
            lambda: 1e-2,
            ..Default::default()
        };
        assert!(fit_nomogram(&x, &y, &["m1".into()], &ridge).is_ok());
    }

    #[test]
    fn svg_has_one_axis_per_row() {
        let svg = NomogramModel::reference().to_svg();
        for label in ["Points", "random_forest", "extra_trees", "gradient_boosting", "Total points", "Probability"] {
            assert!(svg.contains(&format!(">{label}<")), "{label}");
        }
    }
}
