//! ROC, calibration and decision curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores at or above this value are called positive.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{a} scores for {b} labels")));
    }
    Ok(())
}

/// Threshold-swept ROC curve. Tied scores move both rates in one step, so
/// the trapezoidal area counts ties as half-concordant.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    check_lengths(scores.len(), labels.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numerical("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        auc += (fp - fp0) * (tp + tp0) * 0.5;
        points.push(RocPoint {
            fpr: fp / neg,
            tpr: tp / pos,
            threshold: s,
        });
    }
    Ok(RocCurve {
        points,
        auc: auc / (pos * neg),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub mean_predicted: f64,
    pub observed: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    /// Nonempty bins only, in increasing order.
    pub bins: Vec<CalibrationBin>,
    /// Largest |mean predicted − observed| over the nonempty bins.
    pub gap: f64,
}

/// Equal-width binning of predictions on [0, 1]. The last bin is closed.
pub fn calibration_curve(probabilities: &[f64], outcomes: &[bool], bins: usize) -> Result<CalibrationCurve> {
    check_lengths(probabilities.len(), outcomes.len())?;
    if bins == 0 {
        return Err(Error::InvalidParameter("at least one calibration bin required".into()));
    }
    if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::OutOfRange {
            name: "probability".into(),
            value: *p,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let mut sum = vec![0.0; bins];
    let mut hits = vec![0usize; bins];
    let mut count = vec![0usize; bins];
    for (&p, &y) in probabilities.iter().zip(outcomes) {
        let b = ((p * bins as f64) as usize).min(bins - 1);
        sum[b] += p;
        count[b] += 1;
        hits[b] += y as usize;
    }
    let width = 1.0 / bins as f64;
    let out: Vec<CalibrationBin> = (0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| CalibrationBin {
            lower: b as f64 * width,
            upper: (b + 1) as f64 * width,
            mean_predicted: sum[b] / count[b] as f64,
            observed: hits[b] as f64 / count[b] as f64,
            count: count[b],
        })
        .collect();
    let gap = out
        .iter()
        .map(|b| (b.mean_predicted - b.observed).abs())
        .fold(0.0, f64::max);
    Ok(CalibrationCurve { bins: out, gap })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionPoint {
    pub threshold: f64,
    pub model: f64,
    pub treat_all: f64,
    pub treat_none: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionCurve {
    pub prevalence: f64,
    pub points: Vec<DecisionPoint>,
}

/// Net benefit `TP/N − FP/N · pt/(1 − pt)` where a patient is treated when
/// the predicted probability is at least `pt`.
pub fn decision_curve(probabilities: &[f64], outcomes: &[bool], thresholds: &[f64]) -> Result<DecisionCurve> {
    check_lengths(probabilities.len(), outcomes.len())?;
    if probabilities.is_empty() {
        return Err(Error::InvalidParameter("no predictions".into()));
    }
    let n = probabilities.len() as f64;
    let prevalence = outcomes.iter().filter(|&&y| y).count() as f64 / n;
    let mut points = Vec::with_capacity(thresholds.len());
    for &pt in thresholds {
        if !(pt > 0.0 && pt < 1.0) {
            return Err(Error::OutOfRange {
                name: "threshold".into(),
                value: pt,
                lo: 0.0,
                hi: 1.0,
            });
        }
        let odds = pt / (1.0 - pt);
        let (mut tp, mut fp) = (0.0, 0.0);
        for (&p, &y) in probabilities.iter().zip(outcomes) {
            if p >= pt {
                if y {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        points.push(DecisionPoint {
            threshold: pt,
            model: tp / n - fp / n * odds,
            treat_all: prevalence - (1.0 - prevalence) * odds,
            treat_none: 0.0,
        });
    }
    Ok(DecisionCurve { prevalence, points })
}

/// `count` evenly spaced thresholds strictly inside (0, 1): 1/(count+1), ...
pub fn threshold_grid(count: usize) -> Vec<f64> {
    (1..=count).map(|i| i as f64 / (count + 1) as f64).collect()
}
