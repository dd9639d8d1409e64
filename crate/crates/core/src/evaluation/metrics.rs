//! Confusion-matrix metrics with normal-approximation confidence intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// z-quantile for a two-sided 95% interval.
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    /// Tallies hard predictions against labels; `true` is the positive class.
    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> Result<Self> {
        if predicted.len() != actual.len() {
            return Err(Error::Shape(format!(
                "{} predictions for {} labels",
                predicted.len(),
                actual.len()
            )));
        }
        let mut cm = Self::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => cm.tp += 1,
                (false, false) => cm.tn += 1,
                (true, false) => cm.fp += 1,
                (false, true) => cm.fn_ += 1,
            }
        }
        Ok(cm)
    }

    /// Thresholds scores at `cutoff` (inclusive) before tallying.
    pub fn from_scores(scores: &[f64], actual: &[bool], cutoff: f64) -> Result<Self> {
        let predicted: Vec<bool> = scores.iter().map(|&s| s >= cutoff).collect();
        Self::from_predictions(&predicted, actual)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Class supports, negative first.
    pub fn support(&self) -> [u64; 2] {
        [self.tn + self.fp, self.tp + self.fn_]
    }

    /// The same counts with the other class designated positive.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    /// Half-width of the 95% interval.
    pub ci: f64,
    /// The denominator was zero; `value` is reported as 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl Metric {
    fn ratio(num: f64, den: f64, n_eff: f64) -> Self {
        if den <= 0.0 {
            return Self {
                value: 0.0,
                ci: 0.0,
                degenerate: true,
            };
        }
        let value = num / den;
        Self {
            value,
            ci: half_width(value, n_eff),
            degenerate: false,
        }
    }
}

/// `1.96 * sqrt(m (1 - m) / n)`, zero when `n` is zero.
pub fn half_width(m: f64, n: f64) -> f64 {
    if n <= 0.0 {
        0.0
    } else {
        Z95 * (m * (1.0 - m) / n).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: Metric,
    pub precision: Metric,
    /// Also called sensitivity.
    pub recall: Metric,
    pub f1: Metric,
    pub specificity: Metric,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    /// Count per class, negative first.
    pub support: [u64; 2],
    pub weighted: bool,
    pub confusion: ConfusionMatrix,
}

/// Metrics for the positive class of `cm`.
///
/// F1 is the harmonic mean of the reported precision and recall; its
/// interval uses `TP + (FP + FN) / 2` as the effective count.
pub fn metrics(cm: &ConfusionMatrix) -> MetricReport {
    let (tp, tn, fp, fn_) = (cm.tp as f64, cm.tn as f64, cm.fp as f64, cm.fn_ as f64);
    let n = cm.total() as f64;
    let precision = Metric::ratio(tp, tp + fp, tp + fp);
    let recall = Metric::ratio(tp, tp + fn_, tp + fn_);
    let f1_den = precision.value + recall.value;
    let f1_n = tp + 0.5 * (fp + fn_);
    let f1 = if f1_den > 0.0 {
        let v = 2.0 * precision.value * recall.value / f1_den;
        Metric {
            value: v,
            ci: half_width(v, f1_n),
            degenerate: false,
        }
    } else {
        Metric {
            value: 0.0,
            ci: 0.0,
            degenerate: true,
        }
    };
    MetricReport {
        accuracy: Metric::ratio(tp + tn, n, n),
        precision,
        recall,
        f1,
        specificity: Metric::ratio(tn, tn + fp, tn + fp),
        auc: None,
        support: cm.support(),
        weighted: false,
        confusion: *cm,
    }
}

/// Support-weighted average of per-class reports.
///
/// Accuracy is taken from the pooled counts of the first report rather than
/// averaged, and intervals use the total count. Classes with zero support
/// carry no weight.
pub fn weighted_report(per_class: &[(MetricReport, u64)]) -> Result<MetricReport> {
    let total: u64 = per_class.iter().map(|(_, s)| s).sum();
    let first = per_class
        .first()
        .ok_or_else(|| Error::InvalidParameter("no class reports to average".into()))?;
    if total == 0 {
        return Err(Error::InvalidParameter("all class supports are zero".into()));
    }
    let n = total as f64;
    let avg = |f: fn(&MetricReport) -> f64| {
        let v = per_class.iter().map(|(r, s)| f(r) * *s as f64).sum::<f64>() / n;
        Metric {
            value: v,
            ci: half_width(v, n),
            degenerate: false,
        }
    };
    let pooled = first.0.confusion;
    let acc = (pooled.tp + pooled.tn) as f64 / pooled.total().max(1) as f64;
    Ok(MetricReport {
        accuracy: Metric {
            value: acc,
            ci: half_width(acc, pooled.total() as f64),
            degenerate: pooled.total() == 0,
        },
        precision: avg(|r| r.precision.value),
        recall: avg(|r| r.recall.value),
        f1: avg(|r| r.f1.value),
        specificity: avg(|r| r.specificity.value),
        auc: first.0.auc,
        support: first.0.support,
        weighted: true,
        confusion: pooled,
    })
}

/// Two-class weighted report from a confusion matrix.
pub fn binary_weighted_report(cm: &ConfusionMatrix) -> MetricReport {
    let pos = metrics(cm);
    let neg = metrics(&cm.swapped());
    let [s_neg, s_pos] = cm.support();
    weighted_report(&[(pos, s_pos), (neg, s_neg)]).expect("two class reports")
}
