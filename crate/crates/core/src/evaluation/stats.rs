//! Hypothesis tests used for cohort profiling and outcome tables.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    FisherExact,
    ChiSquare,
    WilcoxonRankSum,
}

impl TestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::FisherExact => "fisher_exact",
            TestKind::ChiSquare => "chi_square",
            TestKind::WilcoxonRankSum => "wilcoxon_rank_sum",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatTestResult {
    pub test: TestKind,
    /// Fisher: probability of the observed table. Chi-square: Pearson χ².
    /// Rank-sum: standardised z of the first sample's rank sum.
    pub statistic: f64,
    pub p_value: f64,
    pub n: u64,
}

/// Largest total for which Fisher probabilities are summed in exact integer
/// arithmetic; `C(130, 65)` still fits in a `u128`.
const EXACT_LIMIT: u64 = 130;

fn binomial_row(m: u64) -> Vec<u128> {
    let mut row = vec![1u128];
    for _ in 0..m {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(1);
        for w in row.windows(2) {
            next.push(w[0] + w[1]);
        }
        next.push(1);
        row = next;
    }
    row
}

/// Two-sided Fisher exact test on `[[a, b], [c, d]]`: sums the
/// probabilities of every table with the same margins that is no more
/// likely than the observed one.
pub fn fisher_exact(table: [[u64; 2]; 2]) -> StatTestResult {
    let [[a, b], [c, d]] = table;
    let (r1, r2, c1) = (a + b, c + d, a + c);
    let n = r1 + r2;
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    if n <= EXACT_LIMIT {
        let (row1, row2, all) = (binomial_row(r1), binomial_row(r2), binomial_row(n));
        let num = |k: u64| row1[k as usize] * row2[(c1 - k) as usize];
        let observed = num(a);
        let tail: u128 = (lo..=hi).map(num).filter(|&v| v <= observed).sum();
        let den = all[c1 as usize] as f64;
        return StatTestResult {
            test: TestKind::FisherExact,
            statistic: observed as f64 / den,
            p_value: (tail as f64 / den).min(1.0),
            n,
        };
    }
    let denom = ln_binomial(n, c1);
    let lp = |k: u64| ln_binomial(r1, k) + ln_binomial(r2, c1 - k) - denom;
    let observed = lp(a);
    // relative slack so tables equal to the observed one up to rounding count
    let slack = 1e-7f64.ln_1p();
    let p: f64 = (lo..=hi)
        .map(lp)
        .filter(|&v| v - observed <= slack)
        .map(f64::exp)
        .sum();
    StatTestResult {
        test: TestKind::FisherExact,
        statistic: observed.exp(),
        p_value: p.min(1.0),
        n,
    }
}

/// Pearson χ² on a 2×2 table with one degree of freedom, no continuity
/// correction.
pub fn chi_square(table: [[u64; 2]; 2]) -> Result<StatTestResult> {
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let n = rows[0] + rows[1];
    if rows.contains(&0) || cols.contains(&0) {
        return Err(Error::InvalidParameter(format!(
            "degenerate margins {rows:?} / {cols:?} for chi-square"
        )));
    }
    let mut stat = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let e = rows[i] as f64 * cols[j] as f64 / n as f64;
            let o = table[i][j] as f64;
            stat += (o - e) * (o - e) / e;
        }
    }
    let dist = ChiSquared::new(1.0).expect("one degree of freedom");
    Ok(StatTestResult {
        test: TestKind::ChiSquare,
        statistic: stat,
        p_value: dist.sf(stat).clamp(0.0, 1.0),
        n,
    })
}

/// Midranks (1-based) of the pooled values.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Wilcoxon rank-sum test with the tie-corrected normal approximation and
/// no continuity correction.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<StatTestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter("rank-sum samples must be nonempty".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::Numerical("NaN in rank-sum sample".into()));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let n = n1 + n2;
    let r1: f64 = ranks[..a.len()].iter().sum();
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    for run in sorted.chunk_by(|x, y| x == y) {
        let t = run.len() as f64;
        ties += t * t * t - t;
    }
    let var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)).max(1.0));
    let (z, p) = if var > 0.0 {
        let z = (r1 - n1 * (n + 1.0) / 2.0) / var.sqrt();
        let tail = Normal::standard().sf(z.abs());
        (z, (2.0 * tail).min(1.0))
    } else {
        (0.0, 1.0)
    };
    Ok(StatTestResult {
        test: TestKind::WilcoxonRankSum,
        statistic: z,
        p_value: p,
        n: pooled.len() as u64,
    })
}
