//! Spearman rank correlation, Benjamini–Hochberg adjustment and Fisher-z
//! power.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 4 pairs, got {0}")]
    TooShort(usize),
    #[error("input series is constant; correlation undefined")]
    ConstantInput,
    #[error("p-value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("|r| must be below 1 for the power approximation, got {0}")]
    DegenerateR(f64),
}

/// How the two-sided Spearman p-value is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PValueMethod {
    /// Exact permutation for n ≤ [`EXACT_MAX_N`], t-approximation above.
    #[default]
    Auto,
    /// Student t with n − 2 degrees of freedom.
    TDist,
    /// Full permutation distribution (n ≤ [`EXACT_MAX_N`]).
    Exact,
}

pub const EXACT_MAX_N: usize = 8;

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn midranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &p in &idx[i..=j] {
            ranks[p] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn t_pvalue(r: f64, n: usize) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Share of all rank permutations whose |rho| reaches the observed one.
fn exact_pvalue(rx: &[f64], ry: &[f64], r: f64) -> f64 {
    let n = ry.len();
    let mut perm = ry.to_vec();
    let mut c = vec![0usize; n];
    let mut hits = 0u64;
    let mut total = 0u64;
    let mut visit = |p: &[f64]| {
        total += 1;
        if pearson(rx, p).is_some_and(|q| q.abs() >= r.abs() - 1e-12) {
            hits += 1;
        }
    };
    // Heap's algorithm
    visit(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    hits as f64 / total as f64
}

/// Spearman's rho and its two-sided p-value under `method`.
pub fn spearman_with(x: &[f64], y: &[f64], method: PValueMethod) -> Result<(f64, f64), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 4 {
        return Err(StatsError::TooShort(n));
    }
    let rx = midranks(x);
    let ry = midranks(y);
    let r = pearson(&rx, &ry).ok_or(StatsError::ConstantInput)?;
    let exact = match method {
        PValueMethod::Auto => n <= EXACT_MAX_N,
        PValueMethod::Exact => {
            if n > EXACT_MAX_N {
                return Err(StatsError::TooShort(n));
            }
            true
        }
        PValueMethod::TDist => false,
    };
    let p = if exact { exact_pvalue(&rx, &ry, r) } else { t_pvalue(r, n) };
    Ok((r, p))
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, f64), StatsError> {
    spearman_with(x, y, PValueMethod::Auto)
}

/// Benjamini–Hochberg step-up adjusted p-values, in input order.
pub fn bh_fdr(p: &[f64]) -> Result<Vec<f64>, StatsError> {
    if let Some(&bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(StatsError::OutOfRange(bad));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        // the max guards against the product rounding below p
        running = running.min((p[i] * m as f64 / (rank + 1) as f64).max(p[i]));
        out[i] = running.min(1.0);
    }
    Ok(out)
}

/// `Φ(√(n−3)·|atanh r| − z_{1−α/2})`.
pub fn posthoc_power(r: f64, n: usize, alpha: f64) -> Result<f64, StatsError> {
    if n < 4 {
        return Err(StatsError::TooShort(n));
    }
    if r.is_nan() || r.abs() >= 1.0 {
        return Err(StatsError::DegenerateR(r));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let z_crit = normal.inverse_cdf(1.0 - alpha / 2.0);
    Ok(normal.cdf(((n - 3) as f64).sqrt() * r.abs().atanh() - z_crit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub p: f64,
    pub p_cor: f64,
    pub power: f64,
    pub n: usize,
}

/// Spearman test of `y` against `x` with power; `p_cor` starts equal to `p`
/// until [`adjust`] is applied over a table. A perfect correlation reports
/// power 1.
pub fn correlate(x: &[f64], y: &[f64], alpha: f64, method: PValueMethod) -> Result<CorrelationResult, StatsError> {
    let (r, p) = spearman_with(x, y, method)?;
    let power = if r.abs() >= 1.0 { 1.0 } else { posthoc_power(r, x.len(), alpha)? };
    Ok(CorrelationResult { r, p, p_cor: p, power, n: x.len() })
}

/// Replaces `p_cor` with BH-adjusted values across the given rows.
pub fn adjust(rows: &mut [&mut CorrelationResult]) {
    let raw: Vec<f64> = rows.iter().map(|r| r.p).collect();
    let adj = bh_fdr(&raw).expect("p-values in range");
    for (row, q) in rows.iter_mut().zip(adj) {
        row.p_cor = q;
    }
}
