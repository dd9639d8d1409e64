//! Binary decision trees shared by the forest and boosting learners.
//!
//! Training samples are unique rows with positive multiplicities, so a
//! replicated (class-balanced) training set never has to be materialised.
//! Trees are stored as preorder node lists.
//!
//! Split tie-breaking: lowest feature index, then lowest threshold.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    /// `x[feature] <= threshold` goes to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Node statistic accumulated over samples.
pub(crate) trait Criterion {
    type Stats: Copy + Default;

    fn sample(&self, pos: usize) -> Self::Stats;
    fn add(a: &mut Self::Stats, b: &Self::Stats);
    fn sub(a: &Self::Stats, b: &Self::Stats) -> Self::Stats;
    fn weight(s: &Self::Stats) -> f64;
    /// Improvement of splitting `parent` into `left` and `right`.
    fn gain(&self, parent: &Self::Stats, left: &Self::Stats, right: &Self::Stats) -> f64;
    fn leaf_value(&self, s: &Self::Stats) -> f64;
    fn is_pure(s: &Self::Stats) -> bool;
}

/// Gini impurity over weighted binary labels.
pub(crate) struct Gini<'a> {
    pub labels: &'a [bool],
    pub weights: &'a [f64],
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ClassCounts {
    total: f64,
    positive: f64,
}

fn weighted_gini(s: &ClassCounts) -> f64 {
    if s.total <= 0.0 {
        return 0.0;
    }
    let p = s.positive / s.total;
    s.total * 2.0 * p * (1.0 - p)
}

impl Criterion for Gini<'_> {
    type Stats = ClassCounts;

    fn sample(&self, pos: usize) -> ClassCounts {
        let w = self.weights[pos];
        ClassCounts {
            total: w,
            positive: if self.labels[pos] { w } else { 0.0 },
        }
    }

    fn add(a: &mut ClassCounts, b: &ClassCounts) {
        a.total += b.total;
        a.positive += b.positive;
    }

    fn sub(a: &ClassCounts, b: &ClassCounts) -> ClassCounts {
        ClassCounts {
            total: a.total - b.total,
            positive: a.positive - b.positive,
        }
    }

    fn weight(s: &ClassCounts) -> f64 {
        s.total
    }

    fn gain(&self, parent: &ClassCounts, left: &ClassCounts, right: &ClassCounts) -> f64 {
        weighted_gini(parent) - weighted_gini(left) - weighted_gini(right)
    }

    fn leaf_value(&self, s: &ClassCounts) -> f64 {
        if s.total > 0.0 {
            (s.positive / s.total).clamp(0.0, 1.0)
        } else {
            0.5
        }
    }

    fn is_pure(s: &ClassCounts) -> bool {
        s.positive <= 0.0 || s.positive >= s.total
    }
}

/// Second-order (Newton) gain for boosting on gradient/hessian pairs.
pub(crate) struct Newton<'a> {
    /// Negative gradients, already multiplied by sample weight.
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub weights: &'a [f64],
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct GradStats {
    g: f64,
    h: f64,
    w: f64,
}

impl Newton<'_> {
    fn score(&self, s: &GradStats) -> f64 {
        s.g * s.g / (s.h + self.lambda + 1e-300)
    }
}

impl Criterion for Newton<'_> {
    type Stats = GradStats;

    fn sample(&self, pos: usize) -> GradStats {
        GradStats {
            g: self.grad[pos],
            h: self.hess[pos],
            w: self.weights[pos],
        }
    }

    fn add(a: &mut GradStats, b: &GradStats) {
        a.g += b.g;
        a.h += b.h;
        a.w += b.w;
    }

    fn sub(a: &GradStats, b: &GradStats) -> GradStats {
        GradStats {
            g: a.g - b.g,
            h: a.h - b.h,
            w: a.w - b.w,
        }
    }

    fn weight(s: &GradStats) -> f64 {
        s.w
    }

    fn gain(&self, parent: &GradStats, left: &GradStats, right: &GradStats) -> f64 {
        0.5 * (self.score(left) + self.score(right) - self.score(parent))
    }

    fn leaf_value(&self, s: &GradStats) -> f64 {
        s.g / (s.h + self.lambda + 1e-300)
    }

    fn is_pure(_: &GradStats) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum SplitMode {
    /// Exhaustive threshold search on `max_features` sampled features.
    Best,
    /// One uniform threshold per sampled feature (extremely randomised trees).
    Random,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: f64,
    /// Features examined per split; `None` means all, in index order.
    pub max_features: Option<usize>,
    pub mode: SplitMode,
}

const MIN_GAIN: f64 = 1e-12;

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

pub(crate) struct TreeBuilder<'a, C: Criterion> {
    x: &'a Matrix,
    /// Training row of each sample position.
    rows: &'a [usize],
    criterion: C,
    params: TreeParams,
    /// Per feature, every sample position sorted by value.
    presorted: Option<&'a [Vec<usize>]>,
    node_of: Vec<usize>,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    root_weight: f64,
}

/// Positions sorted by value for each feature, reused across boosting rounds.
pub(crate) fn presort(x: &Matrix, rows: &[usize]) -> Vec<Vec<usize>> {
    (0..x.cols())
        .map(|f| {
            let mut p: Vec<usize> = (0..rows.len()).collect();
            p.sort_by(|&a, &b| x.get(rows[a], f).total_cmp(&x.get(rows[b], f)).then(a.cmp(&b)));
            p
        })
        .collect()
}

impl<'a, C: Criterion> TreeBuilder<'a, C> {
    pub fn new(x: &'a Matrix, rows: &'a [usize], criterion: C, params: TreeParams) -> Self {
        Self {
            x,
            rows,
            criterion,
            params,
            presorted: None,
            node_of: vec![usize::MAX; rows.len()],
            nodes: Vec::new(),
            importance: vec![0.0; x.cols()],
            root_weight: 0.0,
        }
    }

    pub fn with_presorted(mut self, presorted: &'a [Vec<usize>]) -> Self {
        self.presorted = Some(presorted);
        self
    }

    /// Grows the tree; returns it with per-feature gain normalised by root weight.
    pub fn build(mut self, rng: &mut Rng) -> (Tree, Vec<f64>) {
        let all: Vec<usize> = (0..self.rows.len()).collect();
        let mut root = C::Stats::default();
        for &p in &all {
            C::add(&mut root, &self.criterion.sample(p));
        }
        self.root_weight = C::weight(&root).max(1e-300);
        self.grow(all, root, 0, rng);
        let scale = self.root_weight;
        let imp = self.importance.iter().map(|v| v / scale).collect();
        (Tree { nodes: self.nodes }, imp)
    }

    fn grow(&mut self, positions: Vec<usize>, stats: C::Stats, depth: usize, rng: &mut Rng) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: self.criterion.leaf_value(&stats),
        });
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || C::is_pure(&stats) || C::weight(&stats) < 2.0 * self.params.min_leaf {
            return id;
        }
        for &p in &positions {
            self.node_of[p] = id;
        }
        let Some(split) = self.find_split(id, &positions, &stats, rng) else {
            return id;
        };
        let (mut lp, mut rp) = (Vec::new(), Vec::new());
        let (mut ls, mut rs) = (C::Stats::default(), C::Stats::default());
        for p in positions {
            let s = self.criterion.sample(p);
            if self.x.get(self.rows[p], split.feature) <= split.threshold {
                lp.push(p);
                C::add(&mut ls, &s);
            } else {
                rp.push(p);
                C::add(&mut rs, &s);
            }
        }
        self.importance[split.feature] += split.gain;
        let left = self.grow(lp, ls, depth + 1, rng);
        let right = self.grow(rp, rs, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    fn find_split(
        &mut self,
        node: usize,
        positions: &[usize],
        stats: &C::Stats,
        rng: &mut Rng,
    ) -> Option<SplitChoice> {
        let d = self.x.cols();
        let Some(mtry) = self.params.max_features.filter(|&m| m < d) else {
            let all: Vec<usize> = (0..d).collect();
            return self.best_among(node, positions, stats, &all, rng);
        };
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(rng);
        let mut first: Vec<usize> = order[..mtry].to_vec();
        first.sort_unstable();
        if let Some(s) = self.best_among(node, positions, stats, &first, rng) {
            return Some(s);
        }
        // No valid partition among the sampled features: keep drawing.
        for &f in &order[mtry..] {
            if let Some(s) = self.best_among(node, positions, stats, &[f], rng) {
                return Some(s);
            }
        }
        None
    }

    fn best_among(
        &self,
        node: usize,
        positions: &[usize],
        stats: &C::Stats,
        features: &[usize],
        rng: &mut Rng,
    ) -> Option<SplitChoice> {
        let mut best: Option<SplitChoice> = None;
        for &f in features {
            let cand = match self.params.mode {
                SplitMode::Best => self.best_threshold(node, positions, stats, f),
                SplitMode::Random => self.random_threshold(positions, stats, f, rng),
            };
            if let Some(c) = cand {
                if best.as_ref().is_none_or(|b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn sorted_positions(&self, node: usize, positions: &[usize], f: usize) -> Vec<usize> {
        let m = positions.len();
        if let Some(pre) = self.presorted {
            let log = (usize::BITS - m.leading_zeros()) as usize;
            if m * log.max(1) * 2 >= self.rows.len() {
                return pre[f].iter().copied().filter(|&p| self.node_of[p] == node).collect();
            }
        }
        let mut v: Vec<(f64, usize)> = positions.iter().map(|&p| (self.x.get(self.rows[p], f), p)).collect();
        v.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        v.into_iter().map(|(_, p)| p).collect()
    }

    fn best_threshold(&self, node: usize, positions: &[usize], stats: &C::Stats, f: usize) -> Option<SplitChoice> {
        let sorted = self.sorted_positions(node, positions, f);
        let min_leaf = self.params.min_leaf;
        let total_w = C::weight(stats);
        let mut left = C::Stats::default();
        let mut best: Option<SplitChoice> = None;
        for k in 0..sorted.len() - 1 {
            let p = sorted[k];
            C::add(&mut left, &self.criterion.sample(p));
            let a = self.x.get(self.rows[p], f);
            let b = self.x.get(self.rows[sorted[k + 1]], f);
            if !(a < b) {
                continue;
            }
            let lw = C::weight(&left);
            if lw < min_leaf {
                continue;
            }
            if total_w - lw < min_leaf {
                break;
            }
            let right = C::sub(stats, &left);
            let gain = self.criterion.gain(stats, &left, &right);
            if gain > MIN_GAIN && best.as_ref().is_none_or(|s| gain > s.gain) {
                let mut t = 0.5 * (a + b);
                if !(t < b) {
                    t = a;
                }
                best = Some(SplitChoice {
                    feature: f,
                    threshold: t,
                    gain,
                });
            }
        }
        best
    }

    fn random_threshold(&self, positions: &[usize], stats: &C::Stats, f: usize, rng: &mut Rng) -> Option<SplitChoice> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &p in positions {
            let v = self.x.get(self.rows[p], f);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !(lo < hi) {
            return None;
        }
        let u: f64 = rng.random();
        let mut t = lo + u * (hi - lo);
        if !(t < hi) {
            t = lo;
        }
        let mut left = C::Stats::default();
        for &p in positions {
            if self.x.get(self.rows[p], f) <= t {
                C::add(&mut left, &self.criterion.sample(p));
            }
        }
        let right = C::sub(stats, &left);
        let min_leaf = self.params.min_leaf;
        if C::weight(&left) < min_leaf || C::weight(&right) < min_leaf {
            return None;
        }
        let gain = self.criterion.gain(stats, &left, &right);
        (gain > MIN_GAIN).then_some(SplitChoice {
            feature: f,
            threshold: t,
            gain,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn fit_gini(x: &Matrix, y: &[bool], mode: SplitMode) -> (Tree, Vec<f64>) {
        let rows: Vec<usize> = (0..x.rows()).collect();
        let w = vec![1.0; x.rows()];
        let params = TreeParams {
            max_depth: None,
            min_leaf: 1.0,
            max_features: None,
            mode,
        };
        TreeBuilder::new(x, &rows, Gini { labels: y, weights: &w }, params).build(&mut rng::seeded(1))
    }

    #[test]
    fn separable_data_gives_single_split() {
        let x = Matrix::from_rows(&[[0.0, 5.0], [1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]).unwrap();
        let y = [false, false, true, true];
        let (t, imp) = fit_gini(&x, &y, SplitMode::Best);
        assert_eq!(t.nodes.len(), 3);
        assert_eq!(
            t.nodes[0],
            Node::Split {
                feature: 0,
                threshold: 1.5,
                left: 1,
                right: 2
            }
        );
        assert_eq!(t.predict(&[0.5, 0.0]), 0.0);
        assert_eq!(t.predict(&[2.5, 0.0]), 1.0);
        assert!((imp[0] - 0.5).abs() < 1e-12 && imp[1] == 0.0);
    }

    #[test]
    fn equal_gain_prefers_lowest_feature() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let (t, _) = fit_gini(&x, &[false, true], SplitMode::Best);
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn identical_rows_with_mixed_labels_stay_a_leaf() {
        let x = Matrix::from_rows(&[[1.0], [1.0], [1.0]]).unwrap();
        let (t, _) = fit_gini(&x, &[true, false, true], SplitMode::Best);
        assert_eq!(t.nodes.len(), 1);
        assert!((t.predict(&[1.0]) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn random_mode_fits_training_data() {
        let rows: Vec<[f64; 1]> = (0..40).map(|i| [i as f64]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<bool> = (0..40).map(|i| (i / 5) % 2 == 0).collect();
        let (t, _) = fit_gini(&x, &y, SplitMode::Random);
        for i in 0..40 {
            assert_eq!(t.predict(x.row(i)) > 0.5, y[i]);
        }
    }

    #[test]
    fn presorted_route_matches_sorting_route() {
        let rows: Vec<[f64; 3]> = (0..60)
            .map(|i| {
                let f = i as f64;
                [(f * 0.7).sin(), (f * 1.3).cos(), f % 7.0]
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let idx: Vec<usize> = (0..60).collect();
        let g: Vec<f64> = (0..60).map(|i| if i % 3 == 0 { 0.5 } else { -0.5 }).collect();
        let h = vec![0.25; 60];
        let w = vec![1.0; 60];
        let params = TreeParams {
            max_depth: Some(3),
            min_leaf: 1.0,
            max_features: None,
            mode: SplitMode::Best,
        };
        let crit = || Newton {
            grad: &g,
            hess: &h,
            weights: &w,
            lambda: 1.0,
        };
        let pre = presort(&x, &idx);
        let (a, _) = TreeBuilder::new(&x, &idx, crit(), params).build(&mut rng::seeded(0));
        let (b, _) = TreeBuilder::new(&x, &idx, crit(), params)
            .with_presorted(&pre)
            .build(&mut rng::seeded(0));
        assert_eq!(a, b);
        assert!(a.depth() <= 3);
    }
}
