//! Multivariate imputation by chained equations.
//!
//! Missing cells start at the column mean. Each sweep regresses every
//! incomplete column on all other columns (ridge least squares over the rows
//! where that column was observed) and rewrites only the originally missing
//! cells. The default mode is deterministic; `GaussianResidual` adds seeded
//! draws from each column's residual distribution.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ridge_regression;
use crate::matrix::{dot, Matrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeMode {
    Deterministic,
    GaussianResidual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiceConfig {
    pub iterations: usize,
    pub ridge: f64,
    pub mode: ImputeMode,
    pub seed: u64,
}

impl Default for MiceConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            ridge: 1e-6,
            mode: ImputeMode::Deterministic,
            seed: 0,
        }
    }
}

/// Regression of one column on every other column, in column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnRegression {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub residual_sd: f64,
}

impl ColumnRegression {
    fn predict(&self, row: &[f64], target: usize) -> f64 {
        let mut acc = self.intercept;
        let mut k = 0;
        for (j, &v) in row.iter().enumerate() {
            if j != target {
                acc += self.coefficients[k] * v;
                k += 1;
            }
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationModel {
    pub columns: Vec<String>,
    pub means: Vec<f64>,
    /// `None` only for a single-column table, where the mean is the fallback.
    pub regressions: Vec<Option<ColumnRegression>>,
    pub config: MiceConfig,
}

fn others(row: &[f64], target: usize, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend(row.iter().enumerate().filter(|&(j, _)| j != target).map(|(_, &v)| v));
}

fn fit_column(filled: &Matrix, target: usize, observed: &[usize], ridge: f64) -> Result<ColumnRegression> {
    let xs: Vec<Vec<f64>> = observed
        .iter()
        .map(|&i| {
            let mut b = Vec::with_capacity(filled.cols() - 1);
            others(filled.row(i), target, &mut b);
            b
        })
        .collect();
    let refs: Vec<&[f64]> = xs.iter().map(|r| r.as_slice()).collect();
    let y: Vec<f64> = observed.iter().map(|&i| filled.get(i, target)).collect();
    let (intercept, coefficients) = ridge_regression(&refs, &y, ridge)?;
    let sse: f64 = xs
        .iter()
        .zip(&y)
        .map(|(x, &t)| (t - intercept - dot(&coefficients, x)).powi(2))
        .sum();
    let dof = (y.len() as f64 - 1.0).max(1.0);
    Ok(ColumnRegression {
        intercept,
        coefficients,
        residual_sd: (sse / dof).sqrt(),
    })
}

impl ImputationModel {
    /// Fits the chained regressions on a training table with missing cells.
    pub fn fit(columns: &[String], rows: &[Vec<Option<f64>>], config: MiceConfig) -> Result<Self> {
        Self::fit_transform(columns, rows, config).map(|(m, _)| m)
    }

    /// Fits and also returns the completed training table from the final sweep.
    pub fn fit_transform(
        columns: &[String],
        rows: &[Vec<Option<f64>>],
        config: MiceConfig,
    ) -> Result<(Self, Matrix)> {
        if config.iterations == 0 {
            return Err(Error::InvalidParameter("MICE needs at least one sweep".into()));
        }
        let d = columns.len();
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                found: r.len(),
            });
        }
        let observed: Vec<Vec<usize>> = (0..d)
            .map(|j| (0..rows.len()).filter(|&i| rows[i][j].is_some()).collect())
            .collect();
        for (j, obs) in observed.iter().enumerate() {
            if obs.len() < 2 {
                return Err(Error::InsufficientObserved(columns[j].clone()));
            }
        }
        let means: Vec<f64> = (0..d)
            .map(|j| observed[j].iter().map(|&i| rows[i][j].unwrap()).sum::<f64>() / observed[j].len() as f64)
            .collect();
        let mut filled = mean_fill(rows, &means);
        let incomplete: Vec<usize> = (0..d).filter(|&j| observed[j].len() < rows.len()).collect();
        let mut rng = rng::seeded(config.seed);

        if d > 1 {
            for _ in 0..config.iterations {
                for &j in &incomplete {
                    let reg = fit_column(&filled, j, &observed[j], config.ridge)?;
                    for i in 0..rows.len() {
                        if rows[i][j].is_none() {
                            let mut v = reg.predict(filled.row(i), j);
                            if config.mode == ImputeMode::GaussianResidual && reg.residual_sd > 0.0 {
                                v += Normal::new(0.0, reg.residual_sd).unwrap().sample(&mut rng);
                            }
                            filled.set(i, j, v);
                        }
                    }
                }
            }
        }

        let regressions = (0..d)
            .map(|j| {
                if d > 1 {
                    fit_column(&filled, j, &observed[j], config.ridge).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((
            Self {
                columns: columns.to_vec(),
                means,
                regressions,
                config,
            },
            filled,
        ))
    }

    /// Completes new rows. Observed cells are copied verbatim.
    pub fn apply(&self, rows: &[Vec<Option<f64>>]) -> Result<Matrix> {
        let d = self.columns.len();
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                found: r.len(),
            });
        }
        let mut filled = mean_fill(rows, &self.means);
        let mut rng = rng::seeded(rng::derive_seed(self.config.seed, 1));
        for (i, row) in rows.iter().enumerate() {
            let missing: Vec<usize> = (0..d).filter(|&j| row[j].is_none()).collect();
            if missing.is_empty() {
                continue;
            }
            for _ in 0..self.config.iterations {
                for &j in &missing {
                    if let Some(reg) = &self.regressions[j] {
                        let v = reg.predict(filled.row(i), j);
                        filled.set(i, j, v);
                    }
                }
            }
            if self.config.mode == ImputeMode::GaussianResidual {
                for &j in &missing {
                    if let Some(reg) = self.regressions[j].as_ref().filter(|r| r.residual_sd > 0.0) {
                        let noise = Normal::new(0.0, reg.residual_sd).unwrap().sample(&mut rng);
                        filled.set(i, j, filled.get(i, j) + noise);
                    }
                }
            }
        }
        Ok(filled)
    }
}

fn mean_fill(rows: &[Vec<Option<f64>>], means: &[f64]) -> Matrix {
    let d = means.len();
    let mut m = Matrix::zeros(rows.len(), d);
    for (i, r) in rows.iter().enumerate() {
        for j in 0..d {
            m.set(i, j, r[j].unwrap_or(means[j]));
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|j| format!("c{j}")).collect()
    }

    #[test]
    fn complete_table_is_untouched() {
        let rows: Vec<Vec<Option<f64>>> = (0..6)
            .map(|i| vec![Some(i as f64), Some((i * i) as f64)])
            .collect();
        let m = ImputationModel::fit(&names(2), &rows, MiceConfig::default()).unwrap();
        let out = m.apply(&rows).unwrap();
        for i in 0..6 {
            assert_eq!(out.get(i, 0), i as f64);
            assert_eq!(out.get(i, 1), (i * i) as f64);
        }
    }

    #[test]
    fn all_missing_column_is_named() {
        let rows = vec![vec![Some(1.0), None], vec![Some(2.0), None], vec![Some(3.0), Some(1.0)]];
        let err = ImputationModel::fit(&["a".into(), "b".into()], &rows, MiceConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientObserved(ref c) if c == "b"));
    }

    #[test]
    fn exact_linear_rule_is_recovered() {
        // col1 = 2 * col0, every third value of col1 masked.
        let rows: Vec<Vec<Option<f64>>> = (0..30)
            .map(|i| {
                let x = i as f64 * 0.37 - 3.0;
                vec![Some(x), if i % 3 == 0 { None } else { Some(2.0 * x) }]
            })
            .collect();
        let (model, filled) = ImputationModel::fit_transform(&names(2), &rows, MiceConfig::default()).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let x = r[0].unwrap();
            assert!((filled.get(i, 1) - 2.0 * x).abs() < 1e-6);
        }
        let held_out = vec![vec![Some(10.0), None], vec![Some(-4.5), None]];
        let out = model.apply(&held_out).unwrap();
        assert!((out.get(0, 1) - 20.0).abs() < 1e-6);
        assert!((out.get(1, 1) + 9.0).abs() < 1e-6);
    }

    #[test]
    fn gaussian_mode_is_seeded() {
        let rows: Vec<Vec<Option<f64>>> = (0..20)
            .map(|i| {
                let x = i as f64;
                vec![Some(x), if i % 4 == 0 { None } else { Some(x + (i % 3) as f64) }]
            })
            .collect();
        let cfg = MiceConfig {
            mode: ImputeMode::GaussianResidual,
            seed: 5,
            ..Default::default()
        };
        let a = ImputationModel::fit_transform(&names(2), &rows, cfg).unwrap().1;
        let b = ImputationModel::fit_transform(&names(2), &rows, cfg).unwrap().1;
        assert_eq!(a, b);
    }
}
