//! Small dense solvers on top of nalgebra.

use nalgebra::linalg::SymmetricTridiagonal;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Solves the symmetric system `a x = b`, Cholesky first and LU as fallback.
pub fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    a.lu()
        .solve(b)
        .ok_or_else(|| Error::Numerical("singular linear system".into()))
}

/// Ridge least squares with an unpenalized intercept.
///
/// Returns `(intercept, coefficients)` minimising
/// `|y - b0 - X b|^2 + lambda |b|^2`.
pub fn ridge_regression(rows: &[&[f64]], y: &[f64], lambda: f64) -> Result<(f64, Vec<f64>)> {
    let p = rows.first().map_or(0, |r| r.len());
    let dim = p + 1;
    let mut ata = DMatrix::<f64>::zeros(dim, dim);
    let mut aty = DVector::<f64>::zeros(dim);
    let mut a = vec![0.0; dim];
    for (r, &t) in rows.iter().zip(y) {
        a[0] = 1.0;
        a[1..].copy_from_slice(r);
        for i in 0..dim {
            aty[i] += a[i] * t;
            for j in i..dim {
                ata[(i, j)] += a[i] * a[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            ata[(i, j)] = ata[(j, i)];
        }
    }
    for i in 1..dim {
        ata[(i, i)] += lambda;
    }
    let beta = solve_spd(ata, &aty)?;
    Ok((beta[0], beta.iter().skip(1).copied().collect()))
}

/// The `p` largest eigenvalues of a symmetric matrix, in nonincreasing
/// order, with unit eigenvectors.
///
/// Small matrices and requests for most of the spectrum go through the full
/// decomposition. Otherwise the matrix is reduced to tridiagonal form, the
/// leading eigenvalues are isolated by Sturm-sequence bisection and their
/// vectors found by inverse iteration, which skips accumulating all `n`
/// eigenvectors.
pub fn leading_eigenpairs(m: DMatrix<f64>, p: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = m.nrows();
    if m.ncols() != n || p > n {
        return Err(Error::Shape(format!("{p} eigenpairs of a {n}x{} matrix", m.ncols())));
    }
    if n < 160 || 4 * p > n {
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let vals = order.iter().take(p).map(|&k| eig.eigenvalues[k]).collect();
        let vecs = order
            .iter()
            .take(p)
            .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
            .collect();
        return Ok((vals, vecs));
    }
    let (q, d, e) = SymmetricTridiagonal::new(m).unpack();
    let (d, e) = (d.as_slice().to_vec(), e.as_slice().to_vec());
    let norm = d
        .iter()
        .enumerate()
        .map(|(i, v)| v.abs() + if i > 0 { e[i - 1].abs() } else { 0.0 } + e.get(i).map_or(0.0, |x| x.abs()))
        .fold(0.0, f64::max);
    let pivmin = f64::MIN_POSITIVE * e.iter().map(|x| x * x).fold(1.0, f64::max);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + e.get(i).map_or(0.0, |x| x.abs());
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let vals: Vec<f64> = (0..p).map(|j| bisect(&d, &e, n - 1 - j, lo, hi, pivmin)).collect();

    let tiny = f64::EPSILON * norm.max(f64::MIN_POSITIVE);
    let mut tvecs: Vec<Vec<f64>> = Vec::with_capacity(p);
    for (j, &lambda) in vals.iter().enumerate() {
        let lu = TridiagonalLu::new(&d, &e, lambda, tiny);
        // Deterministic, generic start vector.
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919 + j * 104729) % 1009) as f64 / 1009.0).collect();
        for _ in 0..5 {
            lu.solve(&mut x);
            for v in &tvecs {
                let c: f64 = v.iter().zip(&x).map(|(a, b)| a * b).sum();
                x.iter_mut().zip(v).for_each(|(xi, vi)| *xi -= c * vi);
            }
            let len = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(len.is_finite() && len > 0.0) {
                return Err(Error::Numerical("inverse iteration failed to converge".into()));
            }
            x.iter_mut().for_each(|v| *v /= len);
        }
        tvecs.push(x);
    }
    let vecs = tvecs
        .iter()
        .map(|t| (&q * DVector::from_column_slice(t)).iter().copied().collect())
        .collect();
    Ok((vals, vecs))
}

/// Number of eigenvalues of the tridiagonal matrix below `x`.
fn count_below(d: &[f64], e: &[f64], x: f64, pivmin: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..d.len() {
        let off = if i > 0 { e[i - 1] * e[i - 1] / q } else { 0.0 };
        q = d[i] - x - off;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Eigenvalue with ascending index `k`, by bisection inside `[lo, hi]`.
fn bisect(d: &[f64], e: &[f64], k: usize, mut lo: f64, mut hi: f64, pivmin: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) + pivmin {
            break;
        }
        if count_below(d, e, mid, pivmin) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Gaussian elimination with partial pivoting of `T - shift I`.
struct TridiagonalLu {
    diag: Vec<f64>,
    sup1: Vec<f64>,
    sup2: Vec<f64>,
    mult: Vec<f64>,
    swapped: Vec<bool>,
    tiny: f64,
}

impl TridiagonalLu {
    fn new(d: &[f64], e: &[f64], shift: f64, tiny: f64) -> Self {
        let n = d.len();
        let mut diag: Vec<f64> = d.iter().map(|v| v - shift).collect();
        let mut sup1 = e.to_vec();
        let mut sup2 = vec![0.0; n.saturating_sub(2)];
        let mut mult = vec![0.0; n.saturating_sub(1)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            let sub = e[i];
            if diag[i].abs() >= sub.abs() {
                if diag[i] == 0.0 {
                    diag[i] = tiny;
                }
                let m = sub / diag[i];
                mult[i] = m;
                diag[i + 1] -= m * sup1[i];
            } else {
                let m = diag[i] / sub;
                mult[i] = m;
                swapped[i] = true;
                let next_diag = diag[i + 1];
                let next_sup = if i + 1 < n - 1 { sup1[i + 1] } else { 0.0 };
                diag[i] = sub;
                diag[i + 1] = sup1[i] - m * next_diag;
                sup1[i] = next_diag;
                if i + 1 < n - 1 {
                    sup2[i] = next_sup;
                    sup1[i + 1] = -m * next_sup;
                }
            }
        }
        Self {
            diag,
            sup1,
            sup2,
            mult,
            swapped,
            tiny,
        }
    }

    fn solve(&self, y: &mut [f64]) {
        let n = y.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                y.swap(i, i + 1);
            }
            y[i + 1] -= self.mult[i] * y[i];
        }
        for i in (0..n).rev() {
            let mut v = y[i];
            if i + 1 < n {
                v -= self.sup1[i] * y[i + 1];
            }
            if i + 2 < n {
                v -= self.sup2[i] * y[i + 2];
            }
            let mut piv = self.diag[i];
            if piv.abs() < self.tiny {
                piv = if piv < 0.0 { -self.tiny } else { self.tiny };
            }
            y[i] = v / piv;
        }
    }
}
