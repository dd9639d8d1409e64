//! Random forests and extremely randomised trees.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Gini, SplitMode, Tree, TreeBuilder, TreeParams};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((d as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => d,
            MaxFeatures::Count(c) => c.clamp(1, d.max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub max_features: MaxFeatures,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 200,
            max_features: MaxFeatures::Sqrt,
            max_depth: None,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    /// Mean decrease in Gini impurity per feature, normalised to sum 1.
    pub importance: Vec<f64>,
}

impl ForestModel {
    /// Mean of per-tree leaf class frequencies.
    pub fn probability(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Draws `round(sum w)` rows with probability proportional to `w`, then
/// collapses them into (row, multiplicity) pairs in row order.
fn bootstrap(weights: &[f64], rng: &mut rng::Rng) -> (Vec<usize>, Vec<f64>) {
    let mut cum = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cum.push(acc);
    }
    let draws = acc.round().max(1.0) as usize;
    let mut counts = vec![0u32; weights.len()];
    for _ in 0..draws {
        let u = rng.random::<f64>() * acc;
        let i = cum.partition_point(|&c| c <= u).min(weights.len() - 1);
        counts[i] += 1;
    }
    let rows: Vec<usize> = (0..weights.len()).filter(|&i| counts[i] > 0).collect();
    let w = rows.iter().map(|&i| counts[i] as f64).collect();
    (rows, w)
}

pub(crate) fn fit_forest(
    x: &Matrix,
    y: &[bool],
    weights: &[f64],
    params: &ForestParams,
    extra_trees: bool,
    seed: u64,
) -> ForestModel {
    let d = x.cols();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf as f64,
        max_features: Some(params.max_features.resolve(d)),
        mode: if extra_trees { SplitMode::Random } else { SplitMode::Best },
    };
    let fitted: Vec<(Tree, Vec<f64>)> = (0..params.trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::substream(seed, t as u64);
            let (rows, w) = if extra_trees {
                ((0..x.rows()).collect(), weights.to_vec())
            } else {
                bootstrap(weights, &mut r)
            };
            let labels: Vec<bool> = rows.iter().map(|&i| y[i]).collect();
            let crit = Gini {
                labels: &labels,
                weights: &w,
            };
            TreeBuilder::new(x, &rows, crit, tree_params).build(&mut r)
        })
        .collect();
    let mut importance = vec![0.0; d];
    for (_, imp) in &fitted {
        let s: f64 = imp.iter().sum();
        if s > 0.0 {
            for (a, b) in importance.iter_mut().zip(imp) {
                *a += b / s;
            }
        }
    }
    let total: f64 = importance.iter().sum();
    if total > 0.0 {
        importance.iter_mut().for_each(|v| *v /= total);
    } else if d > 0 {
        importance.iter_mut().for_each(|v| *v = 1.0 / d as f64);
    }
    ForestModel {
        trees: fitted.into_iter().map(|(t, _)| t).collect(),
        importance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bootstrap_respects_total_weight() {
        let mut r = rng::seeded(3);
        let (rows, w) = bootstrap(&[1.0, 3.0, 0.0, 2.0], &mut r);
        assert_eq!(w.iter().sum::<f64>(), 6.0);
        assert!(!rows.contains(&2));
    }

    #[test]
    fn max_features_resolution() {
        assert_eq!(MaxFeatures::Sqrt.resolve(69), 8);
        assert_eq!(MaxFeatures::Sqrt.resolve(1), 1);
        assert_eq!(MaxFeatures::Count(100).resolve(5), 5);
    }
}
