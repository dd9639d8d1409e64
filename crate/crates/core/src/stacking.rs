//! Two-level stacking over out-of-fold base-learner probabilities.
//!
//! Every out-of-fold score is produced by a model whose training rows are
//! recorded, so the absence of leakage can be checked after the fact with
//! [`LeakageAudit::verify`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::BalancePlan;
use crate::error::{Error, Result};
use crate::evaluation::{binary_weighted_report, ConfusionMatrix, CUTOFF};
use crate::learners::logistic::{fit_logistic, LogisticModel, LogisticParams};
use crate::learners::{train_weighted, LearnerSpec, ProbabilisticClassifier, TrainedLearner};
use crate::matrix::Matrix;

pub const STACKING_SCHEMA_VERSION: u32 = 1;

/// Ridge penalty of the meta-learner; small enough to behave as a plain
/// maximum-likelihood fit on well-posed problems.
pub const META_LAMBDA: f64 = 1e-6;

/// Which model produced a set of predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Producer {
    Base { spec: usize },
    Meta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProducerRecord {
    pub producer: Producer,
    /// The fold whose rows this model predicted.
    pub fold: usize,
    /// Distinct row indices the model was trained on.
    pub training_rows: Vec<usize>,
}

/// Training provenance of every held-out prediction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LeakageAudit {
    pub row_folds: Vec<usize>,
    pub records: Vec<ProducerRecord>,
}

impl LeakageAudit {
    /// Checks that no model predicted a fold containing any of its own
    /// training rows, and that each (producer, fold) pair appears once.
    pub fn verify(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for rec in &self.records {
            if !seen.insert((rec.producer, rec.fold)) {
                return Err(Error::Leakage(format!("{:?} recorded twice for fold {}", rec.producer, rec.fold)));
            }
            for &r in &rec.training_rows {
                let f = *self
                    .row_folds
                    .get(r)
                    .ok_or_else(|| Error::Leakage(format!("training row {r} outside the audited rows")))?;
                if f == rec.fold {
                    return Err(Error::Leakage(format!(
                        "{:?} predicting fold {} was trained on row {r} of that fold",
                        rec.producer, rec.fold
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of audited producers.
    pub fn producer_count(&self) -> usize {
        self.records.len()
    }

    fn merge(&mut self, other: LeakageAudit) {
        debug_assert!(self.row_folds.is_empty() || self.row_folds == other.row_folds);
        self.row_folds = other.row_folds;
        self.records.extend(other.records);
    }
}

/// Out-of-fold probabilities, one column per spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OofPredictions {
    pub scores: Matrix,
    pub audit: LeakageAudit,
}

impl OofPredictions {
    /// Keeps the given spec columns, renumbering base producers to match.
    pub fn select(&self, specs: &[usize]) -> OofPredictions {
        let records = self
            .audit
            .records
            .iter()
            .filter_map(|r| match r.producer {
                Producer::Base { spec } => specs.iter().position(|&s| s == spec).map(|j| ProducerRecord {
                    producer: Producer::Base { spec: j },
                    fold: r.fold,
                    training_rows: r.training_rows.clone(),
                }),
                Producer::Meta => None,
            })
            .collect();
        OofPredictions {
            scores: self.scores.select_cols(specs),
            audit: LeakageAudit {
                row_folds: self.audit.row_folds.clone(),
                records,
            },
        }
    }
}

pub(crate) fn class_weights(y: &[bool], plan: BalancePlan) -> Vec<f64> {
    y.iter().map(|&l| plan.factor(l) as f64).collect()
}

fn fold_count(folds: &[usize]) -> usize {
    folds.iter().copied().max().map_or(0, |m| m + 1)
}

/// Trains each spec on all folds but one and predicts the held-out fold.
pub fn generate_oof(
    specs: &[LearnerSpec],
    x: &Matrix,
    y: &[bool],
    folds: &[usize],
    balance: BalancePlan,
) -> Result<OofPredictions> {
    generate_oof_with(specs, y, folds, balance, |train| Ok((x.select_rows(train), x.clone())))
}

/// As [`generate_oof`], with per-fold inputs: `prepare(train_rows)` returns
/// the training matrix and a matrix covering every row, both transformed by
/// whatever was fitted on `train_rows`.
pub(crate) fn generate_oof_with<F>(
    specs: &[LearnerSpec],
    y: &[bool],
    folds: &[usize],
    balance: BalancePlan,
    prepare: F,
) -> Result<OofPredictions>
where
    F: Fn(&[usize]) -> Result<(Matrix, Matrix)> + Sync,
{
    let n = y.len();
    if folds.len() != n {
        return Err(Error::Shape(format!("{} fold assignments for {n} rows", folds.len())));
    }
    let k = fold_count(folds);
    if k < 2 {
        return Err(Error::InvalidParameter("out-of-fold prediction needs at least two folds".into()));
    }
    let weights = class_weights(y, balance);
    let per_fold: Vec<Result<Vec<(usize, Vec<usize>, Vec<f64>)>>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
            let (xt, xall) = prepare(&train)?;
            let yt: Vec<bool> = train.iter().map(|&i| y[i]).collect();
            let wt: Vec<f64> = train.iter().map(|&i| weights[i]).collect();
            let xtest = xall.select_rows(&test);
            specs
                .par_iter()
                .enumerate()
                .map(|(j, spec)| {
                    let model = train_weighted(spec, &xt, &yt, &wt)?;
                    Ok((j, train.clone(), model.predict_proba(&xtest)?))
                })
                .collect()
        })
        .collect();
    let mut scores = Matrix::zeros(n, specs.len());
    let mut audit = LeakageAudit {
        row_folds: folds.to_vec(),
        records: Vec::new(),
    };
    for (f, result) in per_fold.into_iter().enumerate() {
        let test: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
        for (j, train, p) in result? {
            for (&i, v) in test.iter().zip(p) {
                scores.set(i, j, v);
            }
            audit.records.push(ProducerRecord {
                producer: Producer::Base { spec: j },
                fold: f,
                training_rows: train,
            });
        }
    }
    audit.verify()?;
    Ok(OofPredictions { scores, audit })
}

/// Out-of-fold score of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub name: String,
    pub f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Indices into the candidate list, best first.
    pub chosen: Vec<usize>,
    /// One entry per candidate in declaration order.
    pub scores: Vec<CandidateScore>,
}

/// Ranks OOF columns by weighted F1, then accuracy, then column order.
pub fn rank_columns(names: &[String], oof: &Matrix, y: &[bool], take: usize) -> Result<Selection> {
    let mut scores = Vec::with_capacity(oof.cols());
    for (j, name) in names.iter().enumerate() {
        let cm = ConfusionMatrix::from_scores(&oof.column(j), y, CUTOFF)?;
        let r = binary_weighted_report(&cm);
        scores.push(CandidateScore {
            name: name.clone(),
            f1: r.f1.value,
            accuracy: r.accuracy.value,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .f1
            .total_cmp(&scores[a].f1)
            .then(scores[b].accuracy.total_cmp(&scores[a].accuracy))
            .then(a.cmp(&b))
    });
    order.truncate(take);
    Ok(Selection { chosen: order, scores })
}

/// Picks the three best candidates by cross-validated weighted F1.
pub fn select_top3(
    candidates: &[LearnerSpec],
    x: &Matrix,
    y: &[bool],
    folds: &[usize],
    balance: BalancePlan,
) -> Result<Selection> {
    if candidates.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "{} candidates given; at least three are required",
            candidates.len()
        )));
    }
    let oof = generate_oof(candidates, x, y, folds, balance)?;
    let names: Vec<String> = candidates.iter().map(|c| c.name.clone()).collect();
    rank_columns(&names, &oof.scores, y, 3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingModel {
    pub schema_version: u32,
    pub specs: Vec<LearnerSpec>,
    /// Base learners refit on every training row.
    pub base: Vec<TrainedLearner>,
    pub meta: LogisticModel,
    pub balance: BalancePlan,
    /// Fold assignment used to build the meta-features.
    pub folds: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<Selection>,
    pub audit: LeakageAudit,
}

pub(crate) fn fit_meta(scores: &Matrix, y: &[bool], weights: &[f64]) -> Result<LogisticModel> {
    let params = LogisticParams {
        lambda: META_LAMBDA,
        max_iter: 200,
        tol: 1e-10,
    };
    fit_logistic(scores, y, weights, &params)
}

/// Fits the meta-learner on out-of-fold base probabilities, then refits the
/// base learners on all rows.
pub fn fit_stacking(
    specs: &[LearnerSpec],
    x: &Matrix,
    y: &[bool],
    folds: &[usize],
    balance: BalancePlan,
) -> Result<StackingModel> {
    let oof = generate_oof(specs, x, y, folds, balance)?;
    fit_stacking_from_oof(specs, x, y, folds, balance, oof)
}

pub(crate) fn fit_stacking_from_oof(
    specs: &[LearnerSpec],
    x: &Matrix,
    y: &[bool],
    folds: &[usize],
    balance: BalancePlan,
    oof: OofPredictions,
) -> Result<StackingModel> {
    if oof.scores.cols() != specs.len() || oof.scores.rows() != y.len() {
        return Err(Error::Shape("out-of-fold matrix does not match specs and rows".into()));
    }
    oof.audit.verify()?;
    let weights = class_weights(y, balance);
    let meta = fit_meta(&oof.scores, y, &weights)?;
    let base = specs
        .par_iter()
        .map(|s| train_weighted(s, x, y, &weights))
        .collect::<Result<Vec<_>>>()?;
    Ok(StackingModel {
        schema_version: STACKING_SCHEMA_VERSION,
        specs: specs.to_vec(),
        base,
        meta,
        balance,
        folds: folds.to_vec(),
        selection: None,
        audit: oof.audit,
    })
}

impl StackingModel {
    pub fn n_features(&self) -> usize {
        self.base.first().map_or(0, |b| b.n_features)
    }

    /// Base-learner probabilities, one column per base model.
    pub fn base_scores(&self, x: &Matrix) -> Result<Matrix> {
        let cols = self
            .base
            .iter()
            .map(|b| b.predict_proba(x))
            .collect::<Result<Vec<_>>>()?;
        let mut m = Matrix::zeros(x.rows(), cols.len());
        for (j, c) in cols.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                m.set(i, j, *v);
            }
        }
        Ok(m)
    }

    /// Meta-learner probability from precomputed base scores.
    pub fn combine(&self, base_scores: &[f64]) -> f64 {
        self.meta.probability(base_scores)
    }

    pub fn predict_stacking(&self, x: &Matrix) -> Result<Vec<f64>> {
        let s = self.base_scores(x)?;
        Ok(s.iter_rows().map(|r| self.combine(r)).collect())
    }
}

/// Cross-validated stacking on precomputed OOF base scores: for each fold,
/// a meta-learner fitted on the other folds' OOF rows scores the held-out
/// rows. Returns the pooled probabilities and the meta producers' audit.
pub fn crossfit_meta(
    oof: &OofPredictions,
    y: &[bool],
    balance: BalancePlan,
) -> Result<(Vec<f64>, LeakageAudit)> {
    let folds = &oof.audit.row_folds;
    let n = y.len();
    let k = fold_count(folds);
    let weights = class_weights(y, balance);
    let mut out = vec![0.0; n];
    let mut audit = LeakageAudit {
        row_folds: folds.clone(),
        records: Vec::new(),
    };
    for f in 0..k {
        let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
        let xt = oof.scores.select_rows(&train);
        let yt: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let wt: Vec<f64> = train.iter().map(|&i| weights[i]).collect();
        let meta = fit_meta(&xt, &yt, &wt)?;
        for i in (0..n).filter(|&i| folds[i] == f) {
            out[i] = meta.probability(oof.scores.row(i));
        }
        audit.records.push(ProducerRecord {
            producer: Producer::Meta,
            fold: f,
            training_rows: train,
        });
    }
    let mut full = oof.audit.clone();
    full.merge(audit);
    full.verify()?;
    Ok((out, full))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::KnnParams;
    use crate::learners::Algorithm;

    fn data(n: usize) -> (Matrix, Vec<bool>) {
        let rows: Vec<[f64; 2]> = (0..n)
            .map(|i| [(i as f64 * 0.37).sin() + if i % 2 == 0 { 1.5 } else { -1.5 }, (i as f64 * 1.3).cos()])
            .collect();
        (Matrix::from_rows(&rows).unwrap(), (0..n).map(|i| i % 2 == 0).collect())
    }

    #[test]
    fn constant_learner_gives_constant_column() {
        let (x, y) = data(20);
        let folds: Vec<usize> = (0..20).map(|i| i % 5).collect();
        let oof = generate_oof(&[LearnerSpec::constant(0.5).unwrap()], &x, &y, &folds, BalancePlan::IDENTITY).unwrap();
        assert!(oof.scores.column(0).iter().all(|&v| v == 0.5));
        oof.audit.verify().unwrap();
        assert_eq!(oof.audit.producer_count(), 5);
    }

    #[test]
    fn leave_one_out_nearest_duplicate() {
        // each point appears twice; 1-NN without the row itself finds its twin
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..6 {
            let v = [i as f64 * 3.0, (i * i) as f64];
            rows.push(v);
            rows.push(v);
            y.push(i % 3 == 0);
            y.push(i % 3 == 0);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let folds: Vec<usize> = (0..12).collect();
        let spec = LearnerSpec::new("nn1", Algorithm::Knn(KnnParams { k: 1 }), 0).unwrap();
        let oof = generate_oof(&[spec], &x, &y, &folds, BalancePlan::IDENTITY).unwrap();
        for i in 0..12 {
            assert_eq!(oof.scores.get(i, 0), if y[i] { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn tampered_audit_is_detected() {
        let (x, y) = data(20);
        let folds: Vec<usize> = (0..20).map(|i| i % 4).collect();
        let mut oof = generate_oof(&[LearnerSpec::lda(0)], &x, &y, &folds, BalancePlan::IDENTITY).unwrap();
        let fold = oof.audit.records[0].fold;
        let own = folds.iter().position(|&f| f == fold).unwrap();
        oof.audit.records[0].training_rows.push(own);
        assert!(matches!(oof.audit.verify(), Err(Error::Leakage(_))));
    }

    #[test]
    fn zero_meta_weights_give_half() {
        let (x, y) = data(20);
        let folds: Vec<usize> = (0..20).map(|i| i % 4).collect();
        let specs = vec![LearnerSpec::lda(0), LearnerSpec::knn(0), LearnerSpec::logistic_regression(0)];
        let mut m = fit_stacking(&specs, &x, &y, &folds, BalancePlan::IDENTITY).unwrap();
        m.meta.intercept = 0.0;
        m.meta.weights = vec![0.0; 3];
        assert!(m.predict_stacking(&x).unwrap().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn ranking_breaks_ties_by_declaration_order() {
        let y = vec![true, false, true, false];
        let oof = Matrix::from_rows(&[[0.9, 0.9, 0.1], [0.1, 0.1, 0.9], [0.8, 0.8, 0.2], [0.3, 0.3, 0.7]]).unwrap();
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let s = rank_columns(&names, &oof, &y, 2).unwrap();
        assert_eq!(s.chosen, vec![0, 1]);
    }
}
