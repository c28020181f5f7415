//! Linear and quadratic discriminant analysis, Gaussian naive Bayes.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::linear::{Link, LinearModel};
use super::{sigmoid, Diagnostic, Family, ZooError};

/// Ridge added to a covariance that fails to factor.
pub(crate) const REPAIR_RIDGE: f64 = 1e-4;

fn class_rows(y: &[u8]) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, &v) in y.iter().enumerate() {
        out[v as usize].push(i);
    }
    out
}

fn mean_of(x: ArrayView2<'_, f64>, rows: &[usize]) -> DVector<f64> {
    let k = x.ncols();
    let mut m = DVector::zeros(k);
    for &i in rows {
        for j in 0..k {
            m[j] += x[[i, j]];
        }
    }
    m / rows.len() as f64
}

fn scatter(x: ArrayView2<'_, f64>, rows: &[usize], mean: &DVector<f64>) -> DMatrix<f64> {
    let k = x.ncols();
    let mut s = DMatrix::zeros(k, k);
    for &i in rows {
        let d: DVector<f64> = DVector::from_iterator(k, (0..k).map(|j| x[[i, j]] - mean[j]));
        s += &d * d.transpose();
    }
    s
}

fn shrink(cov: &DMatrix<f64>, shrinkage: f64) -> DMatrix<f64> {
    let k = cov.nrows();
    let mu = cov.trace() / k as f64;
    cov * (1.0 - shrinkage) + DMatrix::identity(k, k) * (shrinkage * mu)
}

/// Cholesky factor of `cov`, adding [`REPAIR_RIDGE`] once when the matrix is
/// singular or numerically so.
fn factor(
    cov: DMatrix<f64>,
    diagnostics: &mut Vec<Diagnostic>,
) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, ZooError> {
    let well_conditioned = |c: &DMatrix<f64>| {
        let scale = c.diagonal().max().max(1e-300);
        c.clone().cholesky().filter(|ch| {
            let l = ch.l();
            l.diagonal().iter().all(|d| d * d > 1e-10 * scale)
        })
    };
    if let Some(ch) = well_conditioned(&cov) {
        return Ok(ch);
    }
    let k = cov.nrows();
    let ridge = REPAIR_RIDGE * (cov.trace() / k as f64).max(1.0);
    let repaired = cov + DMatrix::identity(k, k) * ridge;
    match well_conditioned(&repaired) {
        Some(ch) => {
            log::warn!("singular covariance repaired with ridge {ridge:e}");
            diagnostics.push(Diagnostic::RepairedShrinkage { ridge });
            Ok(ch)
        }
        None => Err(ZooError::SingularCovariance),
    }
}

fn require_per_class(family: Family, classes: &[Vec<usize>; 2]) -> Result<(), ZooError> {
    if classes.iter().any(|c| c.len() < 2) {
        return Err(ZooError::TooFewPerClass { family, needed: 2 });
    }
    Ok(())
}

pub(crate) fn fit_lda(
    x: ArrayView2<'_, f64>,
    y: &[u8],
    shrinkage: f64,
    diagnostics: &mut Vec<Diagnostic>,
) -> Result<LinearModel, ZooError> {
    let classes = class_rows(y);
    require_per_class(Family::Lda, &classes)?;
    let n = y.len() as f64;
    let mu0 = mean_of(x, &classes[0]);
    let mu1 = mean_of(x, &classes[1]);
    let pooled = (scatter(x, &classes[0], &mu0) + scatter(x, &classes[1], &mu1)) / (n - 2.0);
    let ch = factor(shrink(&pooled, shrinkage), diagnostics)?;
    let w = ch.solve(&(&mu1 - &mu0));
    let prior1 = classes[1].len() as f64 / n;
    let bias = -0.5 * (mu1.dot(&ch.solve(&mu1)) - mu0.dot(&ch.solve(&mu0))) + (prior1 / (1.0 - prior1)).ln();
    Ok(LinearModel { weights: w.iter().copied().collect(), bias, link: Link::Logistic })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct GaussianClass {
    mean: Vec<f64>,
    /// Row-major inverse covariance.
    precision: Vec<f64>,
    log_det: f64,
    log_prior: f64,
}

impl GaussianClass {
    fn log_density(&self, row: &[f64]) -> f64 {
        let k = self.mean.len();
        let mut q = 0.0;
        for a in 0..k {
            let da = row[a] - self.mean[a];
            let prec = &self.precision[a * k..(a + 1) * k];
            let acc: f64 = prec.iter().zip(row).zip(&self.mean).map(|((p, r), m)| p * (r - m)).sum();
            q += da * acc;
        }
        -0.5 * q - 0.5 * self.log_det + self.log_prior
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Qda {
    classes: [GaussianClass; 2],
}

impl Qda {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut buf = vec![0.0; x.ncols()];
        x.rows()
            .into_iter()
            .map(|r| {
                buf.iter_mut().zip(r.iter()).for_each(|(b, v)| *b = *v);
                sigmoid(self.classes[1].log_density(&buf) - self.classes[0].log_density(&buf))
            })
            .collect()
    }
}

pub(crate) fn fit_qda(
    x: ArrayView2<'_, f64>,
    y: &[u8],
    shrinkage: f64,
    diagnostics: &mut Vec<Diagnostic>,
) -> Result<Qda, ZooError> {
    let classes = class_rows(y);
    require_per_class(Family::Qda, &classes)?;
    let n = y.len() as f64;
    let k = x.ncols();
    let mut fitted = Vec::with_capacity(2);
    for rows in &classes {
        let mu = mean_of(x, rows);
        let cov = scatter(x, rows, &mu) / (rows.len() as f64 - 1.0);
        let ch = factor(shrink(&cov, shrinkage), diagnostics)?;
        let log_det = 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let inv = ch.inverse();
        let mut precision = Vec::with_capacity(k * k);
        for a in 0..k {
            for b in 0..k {
                precision.push(inv[(a, b)]);
            }
        }
        fitted.push(GaussianClass {
            mean: mu.iter().copied().collect(),
            precision,
            log_det,
            log_prior: (rows.len() as f64 / n).ln(),
        });
    }
    let c1 = fitted.pop().unwrap();
    let c0 = fitted.pop().unwrap();
    Ok(Qda { classes: [c0, c1] })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct GaussianNb {
    means: [Vec<f64>; 2],
    vars: [Vec<f64>; 2],
    log_priors: [f64; 2],
}

/// Variance floor applied after smoothing.
const NB_VAR_FLOOR: f64 = 1e-12;

impl GaussianNb {
    fn joint_log_likelihood(&self, c: usize, row: ndarray::ArrayView1<'_, f64>) -> f64 {
        let mut ll = self.log_priors[c];
        for (j, v) in row.iter().enumerate() {
            let var = self.vars[c][j];
            let d = v - self.means[c][j];
            ll -= 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var);
        }
        ll
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| sigmoid(self.joint_log_likelihood(1, r) - self.joint_log_likelihood(0, r)))
            .collect()
    }
}

pub(crate) fn fit_nb(x: ArrayView2<'_, f64>, y: &[u8], var_smoothing: f64) -> GaussianNb {
    let classes = class_rows(y);
    let n = y.len() as f64;
    let k = x.ncols();
    let overall_max_var = (0..k)
        .map(|j| {
            let col = x.column(j);
            let m = col.sum() / n;
            col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
        })
        .fold(0.0f64, f64::max);
    let eps = var_smoothing * overall_max_var;
    let stats = |rows: &[usize]| {
        let m = rows.len() as f64;
        let mut means = vec![0.0; k];
        let mut vars = vec![0.0; k];
        for j in 0..k {
            means[j] = rows.iter().map(|&i| x[[i, j]]).sum::<f64>() / m;
            vars[j] = rows.iter().map(|&i| (x[[i, j]] - means[j]).powi(2)).sum::<f64>() / m;
            vars[j] = (vars[j] + eps).max(NB_VAR_FLOOR);
        }
        (means, vars)
    };
    let (m0, v0) = stats(&classes[0]);
    let (m1, v1) = stats(&classes[1]);
    GaussianNb {
        means: [m0, m1],
        vars: [v0, v1],
        log_priors: [(classes[0].len() as f64 / n).ln(), (classes[1].len() as f64 / n).ln()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn qda_repairs_rank_deficient_subsample() {
        // 16 rows, 10 features: 8 rows per class cannot give a full-rank covariance
        let mut rng = crate::rng::seeded(4);
        use rand::Rng;
        let x = Array2::from_shape_fn((16, 10), |_| rng.random::<f64>());
        let y: Vec<u8> = (0..16).map(|i| (i % 2) as u8).collect();
        let mut diags = Vec::new();
        let m = fit_qda(x.view(), &y, 0.0, &mut diags).unwrap();
        assert!(diags.iter().any(|d| matches!(d, Diagnostic::RepairedShrinkage { .. })));
        assert!(m.predict(x.view()).iter().all(|p| p.is_finite()));
    }

    #[test]
    fn lda_with_shrinkage_avoids_repair() {
        let mut rng = crate::rng::seeded(5);
        use rand::Rng;
        let x = Array2::from_shape_fn((16, 10), |_| rng.random::<f64>());
        let y: Vec<u8> = (0..16).map(|i| (i % 2) as u8).collect();
        let mut diags = Vec::new();
        fit_lda(x.view(), &y, 0.3, &mut diags).unwrap();
        assert!(diags.is_empty());
    }

    #[test]
    fn discriminants_need_two_per_class() {
        let x = ndarray::array![[0.0], [1.0], [2.0]];
        let mut d = Vec::new();
        assert!(matches!(fit_lda(x.view(), &[0, 0, 1], 0.0, &mut d), Err(ZooError::TooFewPerClass { .. })));
    }
}
