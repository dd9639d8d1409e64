use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::matrix::Matrix;

/// Per-feature standardisation with population (1/n) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Columns with zero spread; they map to 0.
    pub constant: Vec<bool>,
}

impl Normalizer {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows().max(1) as f64;
        let d = x.cols();
        let mut means = vec![0.0; d];
        for r in x.iter_rows() {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in x.iter_rows() {
            for j in 0..d {
                var[j] += (r[j] - means[j]).powi(2);
            }
        }
        let stds: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
        let constant = stds
            .iter()
            .zip(&means)
            .map(|(&s, &m)| s <= 1e-12 * m.abs().max(1.0))
            .collect();
        Self {
            means,
            stds,
            constant,
        }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        x.expect_cols(self.means.len())?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            let r = out.row_mut(i);
            for j in 0..r.len() {
                r[j] = if self.constant[j] {
                    0.0
                } else {
                    (r[j] - self.means[j]) / self.stds[j]
                };
            }
        }
        Ok(out)
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| {
                if self.constant[j] {
                    0.0
                } else {
                    (v - self.means[j]) / self.stds[j]
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_two_three() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let n = Normalizer::fit(&x);
        assert!((n.means[0] - 2.0).abs() < 1e-15);
        assert!((n.stds[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let z = n.apply(&x).unwrap();
        let expected = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((z.get(0, 0) + expected).abs() < 1e-12);
        assert_eq!(z.get(1, 0), 0.0);
        assert!((z.get(2, 0) - 1.224744871391589).abs() < 1e-12);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let x = Matrix::from_rows(&[[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]]).unwrap();
        let n = Normalizer::fit(&x);
        assert!(n.constant[0] && !n.constant[1]);
        let z = n.apply(&x).unwrap();
        assert_eq!(z.column(0), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn training_data_is_standardised() {
        let rows: Vec<[f64; 2]> = (0..50)
            .map(|i| [(i as f64).sin() * 7.0 + 3.0, (i * i) as f64 * 0.01])
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let z = Normalizer::fit(&x).apply(&x).unwrap();
        for j in 0..2 {
            let c = z.column(j);
            let m = c.iter().sum::<f64>() / 50.0;
            let v = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 50.0;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-9);
        }
    }
}
