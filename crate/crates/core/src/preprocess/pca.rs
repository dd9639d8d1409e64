//! Principal component analysis with optional whitening.
//!
//! Components are the leading eigenvectors of the sample covariance
//! (denominator `n - 1`) of mean-centred training data. When there are fewer
//! rows than columns the eigenproblem is solved on the `n x n` Gram matrix
//! and mapped back, which gives the same non-zero spectrum.
//!
//! Each component is sign-normalised so that its largest-magnitude entry is
//! positive.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::leading_eigenpairs;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcaConfig {
    pub components: usize,
    pub whiten: bool,
    /// Floor applied to eigenvalues before the whitening division.
    pub eigen_floor: f64,
}

impl Default for PcaConfig {
    fn default() -> Self {
        Self {
            components: 64,
            whiten: true,
            eigen_floor: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub input_dim: usize,
    pub mean: Vec<f64>,
    /// `components x input_dim`, rows orthonormal.
    pub components: Matrix,
    /// Nonincreasing, nonnegative.
    pub eigenvalues: Vec<f64>,
    /// Sum of all covariance eigenvalues (trace).
    pub total_variance: f64,
    pub whiten: bool,
    pub eigen_floor: f64,
}

impl PcaModel {
    pub fn fit(x: &Matrix, config: PcaConfig) -> Result<Self> {
        let (n, d) = (x.rows(), x.cols());
        let p = config.components;
        if n < 2 || p == 0 || p > (n - 1).min(d) {
            return Err(Error::InvalidParameter(format!(
                "component count {p} outside 1..={} for a {n}x{d} matrix",
                n.saturating_sub(1).min(d)
            )));
        }
        let mut mean = vec![0.0; d];
        for r in x.iter_rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut centered = x.to_dmatrix();
        for i in 0..n {
            for j in 0..d {
                centered[(i, j)] -= mean[j];
            }
        }
        let denom = (n - 1) as f64;

        let (values, vectors) = if d < n {
            let cov = centered.tr_mul(&centered) / denom;
            leading_eigenpairs(cov, p)?
        } else {
            let gram = &centered * centered.transpose() / denom;
            let (vals, us) = leading_eigenpairs(gram, p)?;
            let u = DMatrix::from_fn(n, p, |i, k| us[k][i]);
            let projected = centered.tr_mul(&u);
            let mut vecs = Vec::with_capacity(p);
            for v in projected.column_iter() {
                let norm = v.norm();
                if norm <= 1e-300 {
                    return Err(Error::Numerical(
                        "requested component lies in the null space of the data".into(),
                    ));
                }
                vecs.push(v.iter().map(|x| x / norm).collect());
            }
            (vals, vecs)
        };
        let values: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
        let total_variance = centered.iter().map(|v| v * v).sum::<f64>() / denom;
        let mut comp = Matrix::zeros(p, d);
        for (k, mut v) in vectors.into_iter().enumerate() {
            orient(&mut v);
            comp.row_mut(k).copy_from_slice(&v);
        }
        Ok(Self {
            input_dim: d,
            mean,
            components: comp,
            eigenvalues: values.into_iter().take(p).collect(),
            total_variance,
            whiten: config.whiten,
            eigen_floor: config.eigen_floor,
        })
    }

    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Fraction of total variance captured by each retained component.
    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        if self.total_variance <= 0.0 {
            return vec![0.0; self.eigenvalues.len()];
        }
        self.eigenvalues.iter().map(|v| v / self.total_variance).collect()
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = row.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        (0..self.n_components())
            .map(|k| {
                let proj: f64 = self.components.row(k).iter().zip(&centered).map(|(a, b)| a * b).sum();
                if self.whiten {
                    proj / self.eigenvalues[k].max(self.eigen_floor).sqrt()
                } else {
                    proj
                }
            })
            .collect()
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        x.expect_cols(self.input_dim)?;
        let rows: Vec<Vec<f64>> = x.iter_rows().map(|r| self.transform_row(r)).collect();
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, self.n_components()));
        }
        Matrix::from_rows(&rows)
    }

    /// Maps reduced coordinates back to the input space.
    pub fn inverse_transform(&self, z: &Matrix) -> Result<Matrix> {
        z.expect_cols(self.n_components())?;
        let mut out = Matrix::zeros(z.rows(), self.input_dim);
        for i in 0..z.rows() {
            let r = out.row_mut(i);
            r.copy_from_slice(&self.mean);
            for k in 0..self.n_components() {
                let mut c = z.get(i, k);
                if self.whiten {
                    c *= self.eigenvalues[k].max(self.eigen_floor).sqrt();
                }
                for (o, a) in r.iter_mut().zip(self.components.row(k)) {
                    *o += c * a;
                }
            }
        }
        Ok(out)
    }
}

fn orient(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}
