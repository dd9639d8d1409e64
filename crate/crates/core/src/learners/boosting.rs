//! Gradient boosting with logistic loss and Newton-step regression trees.
//!
//! Each round fits a depth-limited tree to the gradient/hessian of the
//! current log-loss and adds `learning_rate` times its leaf values. A round
//! that would raise the training loss is shrunk by halving (and dropped if
//! that fails), so the recorded training loss never increases.

use serde::{Deserialize, Serialize};

use super::tree::{presort, Newton, Node, Tree, TreeBuilder, TreeParams, SplitMode};
use crate::matrix::{sigmoid, Matrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostingParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// L2 penalty on leaf weights.
    pub leaf_lambda: f64,
    pub min_leaf: usize,
}

impl Default for BoostingParams {
    fn default() -> Self {
        Self {
            rounds: 200,
            learning_rate: 0.1,
            max_depth: 3,
            leaf_lambda: 0.0,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    /// Log-odds of the weighted base rate.
    pub base_score: f64,
    /// Leaf values already include the learning rate.
    pub trees: Vec<Tree>,
    /// Weighted training log-loss before the first round and after each round.
    pub training_loss: Vec<f64>,
}

impl BoostedModel {
    pub fn margin(&self, row: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }
}

fn log_loss(margin: &[f64], y: &[bool], w: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..margin.len() {
        let z = margin[i];
        let l = if y[i] { -z } else { z };
        s += w[i] * if l > 0.0 { l + (-l).exp().ln_1p() } else { l.exp().ln_1p() };
    }
    s / w.iter().sum::<f64>()
}

fn scale_leaves(tree: &mut Tree, factor: f64) {
    for n in &mut tree.nodes {
        if let Node::Leaf { value } = n {
            *value *= factor;
        }
    }
}

pub(crate) fn fit_boosting(x: &Matrix, y: &[bool], w: &[f64], params: &BoostingParams, seed: u64) -> BoostedModel {
    let n = x.rows();
    let wsum: f64 = w.iter().sum();
    let wpos: f64 = y.iter().zip(w).filter(|(l, _)| **l).map(|(_, w)| w).sum();
    let base_score = (wpos / (wsum - wpos)).ln();
    let rows: Vec<usize> = (0..n).collect();
    let sorted = presort(x, &rows);
    let mut margin = vec![base_score; n];
    let mut loss = log_loss(&margin, y, w);
    let mut history = vec![loss];
    let mut trees = Vec::with_capacity(params.rounds);
    let tree_params = TreeParams {
        max_depth: Some(params.max_depth),
        min_leaf: params.min_leaf as f64,
        max_features: None,
        mode: SplitMode::Best,
    };
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for round in 0..params.rounds {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            grad[i] = w[i] * (if y[i] { 1.0 } else { 0.0 } - p);
            hess[i] = w[i] * p * (1.0 - p);
        }
        let crit = Newton {
            grad: &grad,
            hess: &hess,
            weights: w,
            lambda: params.leaf_lambda,
        };
        let mut r = rng::substream(seed, round as u64);
        let (mut tree, _) = TreeBuilder::new(x, &rows, crit, tree_params)
            .with_presorted(&sorted)
            .build(&mut r);
        scale_leaves(&mut tree, params.learning_rate);
        let step: Vec<f64> = (0..n).map(|i| tree.predict(x.row(i))).collect();
        let mut factor = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand: Vec<f64> = margin.iter().zip(&step).map(|(m, s)| m + factor * s).collect();
            let l = log_loss(&cand, y, w);
            if l <= loss {
                accepted = Some((cand, l));
                break;
            }
            factor *= 0.5;
        }
        if let Some((cand, l)) = accepted {
            if factor != 1.0 {
                scale_leaves(&mut tree, factor);
            }
            margin = cand;
            loss = l;
            trees.push(tree);
        }
        history.push(loss);
    }
    BoostedModel {
        base_score,
        trees,
        training_loss: history,
    }
}
