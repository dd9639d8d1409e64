//! Base classifiers behind one fit / predict-probability abstraction.
//!
//! All learners accept optional per-row multiplicities so that a
//! replication-balanced training set is represented by weights instead of
//! physical copies. Integer weights are equivalent to repeating rows.

pub mod boosting;
pub mod forest;
pub mod knn;
pub mod lda;
pub mod logistic;
pub mod tree;

use serde::{Deserialize, Serialize};

pub use boosting::{BoostedModel, BoostingParams};
pub use forest::{ForestModel, ForestParams, MaxFeatures};
pub use knn::{KnnModel, KnnParams};
pub use lda::{LdaModel, LdaParams};
pub use logistic::{LogisticModel, LogisticParams};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", content = "params", rename_all = "snake_case")]
pub enum Algorithm {
    LogisticRegression(LogisticParams),
    Lda(LdaParams),
    Knn(KnnParams),
    RandomForest(ForestParams),
    ExtraTrees(ForestParams),
    GradientBoosting(BoostingParams),
    /// Fixed probability regardless of input; a baseline and a test double.
    Constant { probability: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub name: String,
    pub algorithm: Algorithm,
    pub seed: u64,
}

impl LearnerSpec {
    pub fn new(name: impl Into<String>, algorithm: Algorithm, seed: u64) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            algorithm,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn logistic_regression(seed: u64) -> Self {
        Self::unchecked("logistic_regression", Algorithm::LogisticRegression(LogisticParams::default()), seed)
    }

    pub fn lda(seed: u64) -> Self {
        Self::unchecked("lda", Algorithm::Lda(LdaParams::default()), seed)
    }

    pub fn knn(seed: u64) -> Self {
        Self::unchecked("knn", Algorithm::Knn(KnnParams::default()), seed)
    }

    pub fn random_forest(seed: u64) -> Self {
        Self::unchecked("random_forest", Algorithm::RandomForest(ForestParams::default()), seed)
    }

    pub fn extra_trees(seed: u64) -> Self {
        Self::unchecked("extra_trees", Algorithm::ExtraTrees(ForestParams::default()), seed)
    }

    pub fn gradient_boosting(seed: u64) -> Self {
        Self::unchecked("gradient_boosting", Algorithm::GradientBoosting(BoostingParams::default()), seed)
    }

    /// Deeper boosting with penalised leaf weights; fills the slot of the
    /// extreme-gradient-boosting model in the candidate pool.
    pub fn regularized_boosting(seed: u64) -> Self {
        Self::unchecked(
            "regularized_boosting",
            Algorithm::GradientBoosting(BoostingParams {
                max_depth: 6,
                leaf_lambda: 1.0,
                ..BoostingParams::default()
            }),
            seed,
        )
    }

    /// Shallow boosted stumps; fills the slot of the adaptive-boosting model.
    pub fn boosted_stumps(seed: u64) -> Self {
        Self::unchecked(
            "boosted_stumps",
            Algorithm::GradientBoosting(BoostingParams {
                rounds: 100,
                learning_rate: 0.5,
                max_depth: 1,
                ..BoostingParams::default()
            }),
            seed,
        )
    }

    pub fn constant(probability: f64) -> Result<Self> {
        Self::new(format!("constant_{probability}"), Algorithm::Constant { probability }, 0)
    }

    fn unchecked(name: &str, algorithm: Algorithm, seed: u64) -> Self {
        Self {
            name: name.into(),
            algorithm,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(format!("{}: {m}", self.name)));
        match &self.algorithm {
            Algorithm::LogisticRegression(p) => {
                if !(p.lambda >= 0.0) || p.max_iter == 0 || !(p.tol > 0.0) {
                    return bad("lambda >= 0, max_iter >= 1 and tol > 0 required".into());
                }
            }
            Algorithm::Lda(p) => {
                if !(p.ridge_scale >= 0.0) {
                    return bad("ridge_scale must be nonnegative".into());
                }
            }
            Algorithm::Knn(p) => {
                if p.k == 0 {
                    return bad("k must be at least 1".into());
                }
            }
            Algorithm::RandomForest(p) | Algorithm::ExtraTrees(p) => {
                if p.trees == 0 || p.min_leaf == 0 || p.max_depth == Some(0) {
                    return bad("trees, min_leaf and depth must be at least 1".into());
                }
                if p.max_features == MaxFeatures::Count(0) {
                    return bad("max_features must be at least 1".into());
                }
            }
            Algorithm::GradientBoosting(p) => {
                if p.rounds == 0 || p.max_depth == 0 || p.min_leaf == 0 {
                    return bad("rounds, depth and min_leaf must be at least 1".into());
                }
                if !(p.learning_rate > 0.0 && p.learning_rate <= 1.0) {
                    return bad(format!("learning rate {} outside (0, 1]", p.learning_rate));
                }
                if !(p.leaf_lambda >= 0.0) {
                    return bad("leaf_lambda must be nonnegative".into());
                }
            }
            Algorithm::Constant { probability } => {
                if !(0.0..=1.0).contains(probability) {
                    return bad(format!("probability {probability} outside [0, 1]"));
                }
            }
        }
        Ok(())
    }
}

/// The candidate pool searched by stacking, in declaration order.
pub fn candidate_pool(seed: u64) -> Vec<LearnerSpec> {
    vec![
        LearnerSpec::logistic_regression(seed),
        LearnerSpec::lda(seed),
        LearnerSpec::knn(seed),
        LearnerSpec::random_forest(seed),
        LearnerSpec::extra_trees(seed),
        LearnerSpec::gradient_boosting(seed),
        LearnerSpec::regularized_boosting(seed),
        LearnerSpec::boosted_stumps(seed),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum FittedModel {
    Logistic(LogisticModel),
    Lda(LdaModel),
    Knn(KnnModel),
    Forest(ForestModel),
    Boosted(BoostedModel),
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedLearner {
    pub spec: LearnerSpec,
    pub n_features: usize,
    pub training_rows: usize,
    pub model: FittedModel,
}

pub trait ProbabilisticClassifier {
    fn n_features(&self) -> usize;

    /// Positive-class probability for one row.
    fn predict_row(&self, row: &[f64]) -> f64;

    fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.expect_cols(self.n_features())?;
        Ok(x.iter_rows().map(|r| self.predict_row(r)).collect())
    }
}

impl ProbabilisticClassifier for TrainedLearner {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let p = match &self.model {
            FittedModel::Logistic(m) => m.probability(row),
            FittedModel::Lda(m) => m.probability(row),
            FittedModel::Knn(m) => m.probability(row),
            FittedModel::Forest(m) => m.probability(row),
            FittedModel::Boosted(m) => m.probability(row),
            FittedModel::Constant(p) => *p,
        };
        p.clamp(0.0, 1.0)
    }
}

impl TrainedLearner {
    pub fn feature_importance(&self) -> Option<&[f64]> {
        match &self.model {
            FittedModel::Forest(f) => Some(&f.importance),
            _ => None,
        }
    }
}

/// Fits `spec` on rows of `x` with binary labels.
pub fn train(spec: &LearnerSpec, x: &Matrix, y: &[bool]) -> Result<TrainedLearner> {
    train_weighted(spec, x, y, &vec![1.0; y.len()])
}

/// Fits with per-row multiplicities (`weights[i]` copies of row `i`).
pub fn train_weighted(spec: &LearnerSpec, x: &Matrix, y: &[bool], weights: &[f64]) -> Result<TrainedLearner> {
    spec.validate()?;
    if x.rows() != y.len() || weights.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} rows, {} labels, {} weights",
            x.rows(),
            y.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter("sample weights must be positive".into()));
    }
    let has = |c: bool| y.contains(&c);
    let needs_both = !matches!(spec.algorithm, Algorithm::Constant { .. });
    if needs_both && !(has(true) && has(false)) {
        return Err(Error::SingleClass);
    }
    let model = match &spec.algorithm {
        Algorithm::LogisticRegression(p) => FittedModel::Logistic(logistic::fit_logistic(x, y, weights, p)?),
        Algorithm::Lda(p) => FittedModel::Lda(lda::fit_lda(x, y, weights, p)?),
        Algorithm::Knn(p) => FittedModel::Knn(KnnModel {
            k: p.k,
            x: x.clone(),
            y: y.to_vec(),
            weights: weights.to_vec(),
        }),
        Algorithm::RandomForest(p) => FittedModel::Forest(forest::fit_forest(x, y, weights, p, false, spec.seed)),
        Algorithm::ExtraTrees(p) => FittedModel::Forest(forest::fit_forest(x, y, weights, p, true, spec.seed)),
        Algorithm::GradientBoosting(p) => {
            FittedModel::Boosted(boosting::fit_boosting(x, y, weights, p, spec.seed))
        }
        Algorithm::Constant { probability } => FittedModel::Constant(*probability),
    };
    Ok(TrainedLearner {
        spec: spec.clone(),
        n_features: x.cols(),
        training_rows: x.rows(),
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blobs(n: usize, gap: f64) -> (Matrix, Vec<bool>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let a = (i as f64 * 12.9898).sin() * 0.5;
            let b = (i as f64 * 78.233).cos() * 0.5;
            let pos = i % 2 == 0;
            let s = if pos { gap } else { -gap };
            rows.push([s + a, s * 0.5 + b, (i as f64 * 3.1).sin()]);
            y.push(pos);
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn every_learner_fits_separable_blobs() {
        let (x, y) = two_blobs(80, 2.0);
        for spec in candidate_pool(11) {
            let m = train(&spec, &x, &y).unwrap();
            let p = m.predict_proba(&x).unwrap();
            let acc = p.iter().zip(&y).filter(|(p, l)| (**p >= 0.5) == **l).count();
            assert_eq!(acc, 80, "{} misclassified training rows", spec.name);
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let (x, y) = two_blobs(20, 1.0);
        let m = train(&LearnerSpec::knn(0), &x, &y).unwrap();
        assert!(matches!(
            m.predict_proba(&Matrix::zeros(2, 5)),
            Err(Error::Dimension { expected: 3, found: 5 })
        ));
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        assert!(LearnerSpec::new("k0", Algorithm::Knn(KnnParams { k: 0 }), 0).is_err());
        let lr = BoostingParams {
            learning_rate: 1.5,
            ..Default::default()
        };
        assert!(LearnerSpec::new("gb", Algorithm::GradientBoosting(lr), 0).is_err());
        assert!(LearnerSpec::constant(1.2).is_err());
        let trees = ForestParams {
            trees: 0,
            ..Default::default()
        };
        assert!(LearnerSpec::new("rf", Algorithm::RandomForest(trees), 0).is_err());
    }

    #[test]
    fn single_class_rejected_except_constant() {
        let (x, _) = two_blobs(10, 1.0);
        let y = vec![true; 10];
        assert!(matches!(train(&LearnerSpec::lda(0), &x, &y), Err(Error::SingleClass)));
        assert!(train(&LearnerSpec::constant(0.5).unwrap(), &x, &y).is_ok());
    }

    #[test]
    fn spec_serialises_with_algorithm_tag() {
        let s = serde_json::to_string(&LearnerSpec::knn(3)).unwrap();
        assert_eq!(s, r#"{"name":"knn","algorithm":{"algorithm":"knn","params":{"k":5}},"seed":3}"#);
        let back: LearnerSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, LearnerSpec::knn(3));
    }
}
