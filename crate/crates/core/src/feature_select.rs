//! Random-forest feature ranking and the top-k cross-validated sweep.

use std::io::Write;
use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{write_report_csv, MetricReport, ReportRow};
use crate::learners::{train, Algorithm, ForestParams, LearnerSpec, ProbabilisticClassifier};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMethod {
    /// Mean decrease in Gini impurity.
    #[default]
    Gini,
    /// Drop in training accuracy after shuffling one column.
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    /// Name and importance, most important first; scores sum to 1.
    pub features: Vec<(String, f64)>,
    pub method: ImportanceMethod,
    pub forest: ForestParams,
    pub seed: u64,
}

impl FeatureRanking {
    pub fn top(&self, k: usize) -> Vec<String> {
        self.features.iter().take(k).map(|(n, _)| n.clone()).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|(n, _)| n == name)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["rank", "feature", "importance"])?;
        for (i, (n, s)) in self.features.iter().enumerate() {
            w.write_record([(i + 1).to_string(), n.clone(), s.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Ranks the columns of a complete matrix by forest importance.
///
/// Columns are put in name order before fitting, so the ranking does not
/// depend on the order in which features are supplied; equal scores are
/// broken by name.
pub fn rank_features(
    x: &Matrix,
    y: &[bool],
    names: &[String],
    forest: ForestParams,
    method: ImportanceMethod,
    seed: u64,
) -> Result<FeatureRanking> {
    x.expect_cols(names.len())?;
    let mut canonical: Vec<usize> = (0..names.len()).collect();
    canonical.sort_by(|&a, &b| names[a].cmp(&names[b]));
    let x = &x.select_cols(&canonical);
    let names: Vec<String> = canonical.iter().map(|&j| names[j].clone()).collect();
    let spec = LearnerSpec::new("ranking_forest", Algorithm::RandomForest(forest), seed)?;
    let model = train(&spec, x, y)?;
    let scores = match method {
        ImportanceMethod::Gini => model.feature_importance().expect("forest importance").to_vec(),
        ImportanceMethod::Permutation => {
            let base = accuracy(&model.predict_proba(x)?, y);
            let mut drops = Vec::with_capacity(x.cols());
            for j in 0..x.cols() {
                let mut col = x.column(j);
                col.shuffle(&mut rng::substream(seed, j as u64));
                let mut xp = x.clone();
                for (i, v) in col.into_iter().enumerate() {
                    xp.set(i, j, v);
                }
                drops.push((base - accuracy(&model.predict_proba(&xp)?, y)).max(0.0));
            }
            let total: f64 = drops.iter().sum();
            if total > 0.0 {
                drops.iter().map(|d| d / total).collect()
            } else {
                vec![1.0 / x.cols() as f64; x.cols()]
            }
        }
    };
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(FeatureRanking {
        features: order.into_iter().map(|j| (names[j].clone(), scores[j])).collect(),
        method,
        forest,
        seed,
    })
}

fn accuracy(p: &[f64], y: &[bool]) -> f64 {
    p.iter().zip(y).filter(|(p, l)| (**p >= 0.5) == **l).count() as f64 / y.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub features: Vec<String>,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub classifier: String,
    pub rows: Vec<SweepRow>,
    /// Highest weighted F1; ties go to the smaller k.
    pub best_k: usize,
}

impl Sweep {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let rows: Vec<ReportRow> = self
            .rows
            .iter()
            .map(|r| ReportRow {
                block: format!("top_{}", r.k),
                classifier: self.classifier.clone(),
                report: r.report.clone(),
            })
            .collect();
        write_report_csv(&rows, writer)
    }
}

/// Evaluates the top-k features for every k in `ks`. `evaluate` receives
/// the selected feature names and returns the cross-validated report.
pub fn topk_sweep<F>(ranking: &FeatureRanking, ks: RangeInclusive<usize>, classifier: &str, mut evaluate: F) -> Result<Sweep>
where
    F: FnMut(&[String]) -> Result<MetricReport>,
{
    let (lo, hi) = (*ks.start(), *ks.end());
    if lo == 0 || hi < lo || hi > ranking.features.len() {
        return Err(Error::InvalidParameter(format!(
            "k range {lo}..={hi} outside 1..={}",
            ranking.features.len()
        )));
    }
    let mut rows = Vec::new();
    for k in ks {
        let features = ranking.top(k);
        let report = evaluate(&features)?;
        rows.push(SweepRow { k, features, report });
    }
    let best_k = rows
        .iter()
        .fold(None::<&SweepRow>, |best, r| match best {
            Some(b) if b.report.f1.value >= r.report.f1.value => Some(b),
            _ => Some(r),
        })
        .map(|r| r.k)
        .expect("nonempty sweep");
    Ok(Sweep {
        classifier: classifier.into(),
        rows,
        best_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{binary_weighted_report, ConfusionMatrix};

    fn threshold_data(seed: u64) -> (Matrix, Vec<bool>, Vec<String>) {
        use rand::Rng as _;
        let mut r = rng::seeded(seed);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| (0..6).map(|_| r.random::<f64>()).collect()).collect();
        let y = rows.iter().map(|row| row[3] > 0.5).collect();
        let names = (0..6).map(|j| format!("f{j}")).collect();
        (Matrix::from_rows(&rows).unwrap(), y, names)
    }

    fn small_forest() -> ForestParams {
        ForestParams {
            trees: 50,
            ..Default::default()
        }
    }

    #[test]
    fn threshold_feature_ranked_first() {
        let (x, y, names) = threshold_data(1);
        for method in [ImportanceMethod::Gini, ImportanceMethod::Permutation] {
            let r = rank_features(&x, &y, &names, small_forest(), method, 5).unwrap();
            assert_eq!(r.features[0].0, "f3", "{method:?}");
            let total: f64 = r.features.iter().map(|f| f.1).sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert!(r.features.windows(2).all(|w| w[0].1 >= w[1].1));
        }
    }

    #[test]
    fn sweep_prefers_smaller_k_on_ties() {
        let (x, y, names) = threshold_data(2);
        let ranking = rank_features(&x, &y, &names, small_forest(), ImportanceMethod::Gini, 0).unwrap();
        let flat = binary_weighted_report(&ConfusionMatrix::new(5, 5, 5, 5));
        let s = topk_sweep(&ranking, 1..=4, "constant", |_| Ok(flat.clone())).unwrap();
        assert_eq!(s.best_k, 1);
        assert_eq!(s.rows.len(), 4);
        assert!(topk_sweep(&ranking, 0..=3, "x", |_| Ok(flat.clone())).is_err());
    }
}
