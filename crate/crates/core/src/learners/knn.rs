use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

/// Stored training set. Each row counts `weight` times as a neighbour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub x: Matrix,
    pub y: Vec<bool>,
    pub weights: Vec<f64>,
}

impl KnnModel {
    /// Positive fraction among the `k` nearest (Euclidean) neighbours.
    /// Equal distances go to the lower row index first.
    pub fn probability(&self, row: &[f64]) -> f64 {
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter_rows()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        d.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let total: f64 = self.weights.iter().sum();
        let k = (self.k as f64).min(total);
        let mut need = k;
        let mut pos = 0.0;
        for (_, i) in d {
            if need <= 0.0 {
                break;
            }
            let take = self.weights[i].min(need);
            if self.y[i] {
                pos += take;
            }
            need -= take;
        }
        pos / k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_neighbour() {
        let m = KnnModel {
            k: 1,
            x: Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap(),
            y: vec![false, true],
            weights: vec![1.0, 1.0],
        };
        assert_eq!(m.probability(&[0.1, 0.1]), 0.0);
        assert_eq!(m.probability(&[0.9, 0.8]), 1.0);
        // equidistant: lower index wins
        assert_eq!(m.probability(&[0.5, 0.5]), 0.0);
    }

    #[test]
    fn weights_act_as_copies() {
        let m = KnnModel {
            k: 3,
            x: Matrix::from_rows(&[[0.0], [1.0], [5.0]]).unwrap(),
            y: vec![true, false, false],
            weights: vec![2.0, 1.0, 1.0],
        };
        assert!((m.probability(&[0.0]) - 2.0 / 3.0).abs() < 1e-15);
    }
}
