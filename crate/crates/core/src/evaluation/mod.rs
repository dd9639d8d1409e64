//! Classification metrics, curves, statistical tests and report writers.

pub mod curves;
pub mod metrics;
pub mod profile;
pub mod stats;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use curves::{
    calibration_curve, decision_curve, roc_auc, threshold_grid, CalibrationBin, CalibrationCurve, DecisionCurve,
    DecisionPoint, RocCurve, RocPoint,
};
pub use metrics::{binary_weighted_report, half_width, metrics, weighted_report, ConfusionMatrix, Metric, MetricReport};
pub use profile::{profile, CohortProfile, GroupSummary, ProfileRow, VariableKind};
pub use stats::{chi_square, fisher_exact, midranks, wilcoxon_rank_sum, StatTestResult, TestKind};

use crate::error::{Error, Result};
use crate::svg::{LinePlot, Series};

/// Default decision cutoff on positive-class probability.
pub const CUTOFF: f64 = 0.5;

/// Everything computed from one set of pooled test predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEvaluation {
    pub report: MetricReport,
    pub roc: RocCurve,
    pub calibration: CalibrationCurve,
    pub decision: DecisionCurve,
}

/// Weighted report plus curves for probability scores.
pub fn evaluate_scores(scores: &[f64], labels: &[bool]) -> Result<ScoreEvaluation> {
    let cm = ConfusionMatrix::from_scores(scores, labels, CUTOFF)?;
    let roc = roc_auc(scores, labels)?;
    let mut report = binary_weighted_report(&cm);
    report.auc = Some(roc.auc);
    Ok(ScoreEvaluation {
        report,
        roc,
        calibration: calibration_curve(scores, labels, 10)?,
        decision: decision_curve(scores, labels, &threshold_grid(99))?,
    })
}

/// One line of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// Grouping such as a modality or a feature count.
    pub block: String,
    pub classifier: String,
    pub report: MetricReport,
}

/// Writes rows as `block, classifier, A, P, R, F1, S` each with its 95%
/// half-width, followed by AUC and the interval method.
pub fn write_report_csv<W: Write>(rows: &[ReportRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "block",
        "classifier",
        "accuracy",
        "accuracy_ci",
        "precision",
        "precision_ci",
        "recall",
        "recall_ci",
        "f1",
        "f1_ci",
        "specificity",
        "specificity_ci",
        "auc",
        "ci_method",
    ])?;
    for row in rows {
        let r = &row.report;
        let mut rec = vec![row.block.clone(), row.classifier.clone()];
        for m in [r.accuracy, r.precision, r.recall, r.f1, r.specificity] {
            rec.push(format!("{:.6}", m.value));
            rec.push(format!("{:.6}", m.ci));
        }
        rec.push(r.auc.map(|a| format!("{a:.6}")).unwrap_or_default());
        rec.push("normal_approximation".into());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn roc_svg(title: &str, curves: &[(&str, &RocCurve)]) -> String {
    let mut p = LinePlot::new(title, "1 - specificity", "sensitivity");
    for (name, c) in curves {
        let pts = c.points.iter().map(|p| (p.fpr, p.tpr)).collect();
        p.push(Series::line(format!("{name} (AUC {:.3})", c.auc), pts));
    }
    p.push(Series::line("chance", vec![(0.0, 0.0), (1.0, 1.0)]).dashed());
    p.render()
}

pub fn calibration_svg(title: &str, curves: &[(&str, &CalibrationCurve)]) -> String {
    let mut p = LinePlot::new(title, "predicted probability", "observed fraction");
    for (name, c) in curves {
        let pts = c.bins.iter().map(|b| (b.mean_predicted, b.observed)).collect();
        p.push(Series::line(*name, pts));
    }
    p.push(Series::line("ideal", vec![(0.0, 0.0), (1.0, 1.0)]).dashed());
    p.render()
}

pub fn decision_svg(title: &str, curves: &[(&str, &DecisionCurve)]) -> String {
    let mut p = LinePlot::new(title, "threshold probability", "net benefit");
    let mut lo: f64 = -0.05;
    let mut hi: f64 = 0.05;
    for (_, c) in curves {
        hi = hi.max(c.prevalence + 0.05);
        for pt in &c.points {
            lo = lo.min(pt.model);
        }
    }
    lo = lo.max(-hi);
    p = p.y_range(lo, hi);
    for (name, c) in curves {
        p.push(Series::line(*name, c.points.iter().map(|d| (d.threshold, d.model)).collect()));
    }
    if let Some((_, c)) = curves.first() {
        p.push(Series::line("treat all", c.points.iter().map(|d| (d.threshold, d.treat_all)).collect()).dashed());
        p.push(Series::line("treat none", vec![(0.0, 0.0), (1.0, 0.0)]).dashed());
    }
    p.render()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_csv_shape() {
        let cm = ConfusionMatrix::new(8, 2, 1, 9);
        let rows = vec![ReportRow {
            block: "fused".into(),
            classifier: "stacking".into(),
            report: binary_weighted_report(&cm),
        }];
        let mut buf = Vec::new();
        write_report_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("fused,stacking,0.850000,"));
    }

    #[test]
    fn score_evaluation_attaches_auc() {
        let s = [0.9, 0.2, 0.7, 0.4];
        let y = [true, false, true, false];
        let e = evaluate_scores(&s, &y).unwrap();
        assert_eq!(e.report.auc, Some(1.0));
        assert_eq!(e.report.accuracy.value, 1.0);
        assert_eq!(e.decision.points.len(), 99);
    }
}
