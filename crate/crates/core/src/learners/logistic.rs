//! L2-regularised logistic regression fitted by Newton's method (IRLS).
//!
//! Objective: `sum_i w_i * logloss(y_i, sigmoid(b0 + x_i . b)) + lambda/2 |b|^2`,
//! intercept unpenalised.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::matrix::{dot, sigmoid, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub lambda: f64,
    pub max_iter: usize,
    /// Convergence when the largest coefficient update is below this.
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticModel {
    pub fn linear(&self, row: &[f64]) -> f64 {
        self.intercept + dot(&self.weights, row)
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        sigmoid(self.linear(row))
    }
}

fn log1pexp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Penalised negative log-likelihood at `beta = [b0, b...]`.
pub fn objective(x: &Matrix, y: &[bool], w: &[f64], lambda: f64, beta: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..x.rows() {
        let z = beta[0] + dot(&beta[1..], x.row(i));
        // -log p = log(1 + e^-z), -log(1 - p) = log(1 + e^z)
        total += w[i] * if y[i] { log1pexp(-z) } else { log1pexp(z) };
    }
    total + 0.5 * lambda * beta[1..].iter().map(|b| b * b).sum::<f64>()
}

/// Analytic gradient of [`objective`].
pub fn gradient(x: &Matrix, y: &[bool], w: &[f64], lambda: f64, beta: &[f64]) -> Vec<f64> {
    let d = x.cols();
    let mut g = vec![0.0; d + 1];
    for i in 0..x.rows() {
        let r = x.row(i);
        let p = sigmoid(beta[0] + dot(&beta[1..], r));
        let e = w[i] * (p - if y[i] { 1.0 } else { 0.0 });
        g[0] += e;
        for j in 0..d {
            g[j + 1] += e * r[j];
        }
    }
    for j in 0..d {
        g[j + 1] += lambda * beta[j + 1];
    }
    g
}

fn hessian(x: &Matrix, w: &[f64], lambda: f64, beta: &[f64]) -> DMatrix<f64> {
    let d = x.cols();
    let mut h = DMatrix::<f64>::zeros(d + 1, d + 1);
    let mut a = vec![0.0; d + 1];
    for i in 0..x.rows() {
        let r = x.row(i);
        let p = sigmoid(beta[0] + dot(&beta[1..], r));
        let s = w[i] * p * (1.0 - p);
        if s == 0.0 {
            continue;
        }
        a[0] = 1.0;
        a[1..].copy_from_slice(r);
        for j in 0..=d {
            let sj = s * a[j];
            for k in j..=d {
                h[(j, k)] += sj * a[k];
            }
        }
    }
    for j in 0..=d {
        for k in 0..j {
            h[(j, k)] = h[(k, j)];
        }
    }
    for j in 1..=d {
        h[(j, j)] += lambda;
    }
    h
}

/// Newton iterations with step halving when the objective would increase.
pub fn fit_logistic(x: &Matrix, y: &[bool], w: &[f64], params: &LogisticParams) -> Result<LogisticModel> {
    if x.rows() != y.len() || w.len() != y.len() {
        return Err(Error::Shape("rows, labels and weights differ in length".into()));
    }
    let d = x.cols();
    let wsum: f64 = w.iter().sum();
    let wpos: f64 = y.iter().zip(w).filter(|(l, _)| **l).map(|(_, w)| w).sum();
    if wpos <= 0.0 || wpos >= wsum {
        return Err(Error::SingleClass);
    }
    let mut beta = vec![0.0; d + 1];
    beta[0] = (wpos / (wsum - wpos)).ln();
    let mut f = objective(x, y, w, params.lambda, &beta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..params.max_iter {
        iterations = it + 1;
        let g = gradient(x, y, w, params.lambda, &beta);
        let mut h = hessian(x, w, params.lambda, &beta);
        let scale = (0..=d).map(|j| h[(j, j)]).fold(0.0f64, f64::max).max(1.0);
        for j in 0..=d {
            h[(j, j)] += 1e-12 * scale;
        }
        let step = solve_spd(h, &DVector::from_vec(g))?;
        let mut t = 1.0;
        let mut accepted = false;
        let mut candidate = beta.clone();
        for _ in 0..40 {
            for j in 0..=d {
                candidate[j] = beta[j] - t * step[j];
            }
            let fc = objective(x, y, w, params.lambda, &candidate);
            if fc <= f + 1e-12 * f.abs().max(1.0) {
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let max_delta = step.iter().map(|s| (t * s).abs()).fold(0.0, f64::max);
        if accepted {
            beta.copy_from_slice(&candidate);
        }
        if !accepted || max_delta < params.tol {
            converged = accepted || max_delta < params.tol;
            break;
        }
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numerical("logistic regression diverged".into()));
    }
    Ok(LogisticModel {
        intercept: beta[0],
        weights: beta[1..].to_vec(),
        iterations,
        converged,
    })
}
