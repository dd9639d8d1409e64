//! Two-class Fisher linear discriminant with a ridge-stabilised pooled covariance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::matrix::{dot, sigmoid, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaParams {
    /// Ridge added to the pooled covariance is `ridge_scale * trace / d`.
    pub ridge_scale: f64,
}

impl Default for LdaParams {
    fn default() -> Self {
        Self { ridge_scale: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LdaModel {
    pub fn probability(&self, row: &[f64]) -> f64 {
        sigmoid(self.bias + dot(&self.weights, row))
    }
}

pub fn fit_lda(x: &Matrix, y: &[bool], w: &[f64], params: &LdaParams) -> Result<LdaModel> {
    let d = x.cols();
    let mut mean = [vec![0.0; d], vec![0.0; d]];
    let mut wt = [0.0f64; 2];
    for i in 0..x.rows() {
        let c = y[i] as usize;
        wt[c] += w[i];
        for (m, v) in mean[c].iter_mut().zip(x.row(i)) {
            *m += w[i] * v;
        }
    }
    if wt[0] <= 0.0 || wt[1] <= 0.0 {
        return Err(Error::SingleClass);
    }
    for c in 0..2 {
        mean[c].iter_mut().for_each(|m| *m /= wt[c]);
    }
    let mut s = DMatrix::<f64>::zeros(d, d);
    let mut diff = vec![0.0; d];
    for i in 0..x.rows() {
        let c = y[i] as usize;
        for (j, v) in x.row(i).iter().enumerate() {
            diff[j] = v - mean[c][j];
        }
        for a in 0..d {
            let da = w[i] * diff[a];
            for b in a..d {
                s[(a, b)] += da * diff[b];
            }
        }
    }
    let dof = (wt[0] + wt[1] - 2.0).max(1.0);
    for a in 0..d {
        for b in a..d {
            s[(a, b)] /= dof;
            s[(b, a)] = s[(a, b)];
        }
    }
    let trace = s.trace();
    let tau = if trace > 0.0 {
        params.ridge_scale * trace / d as f64
    } else {
        params.ridge_scale
    };
    for a in 0..d {
        s[(a, a)] += tau;
    }
    let delta = DVector::from_iterator(d, (0..d).map(|j| mean[1][j] - mean[0][j]));
    let weights: Vec<f64> = solve_spd(s, &delta)?.iter().copied().collect();
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("degenerate pooled covariance".into()));
    }
    let mid: Vec<f64> = (0..d).map(|j| 0.5 * (mean[0][j] + mean[1][j])).collect();
    let bias = -dot(&weights, &mid) + (wt[1] / wt[0]).ln();
    Ok(LdaModel { weights, bias })
}
