//! Logistic regression, ridge classifier and linear SVM.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{sigmoid, Diagnostic};
use crate::rng;

pub(crate) const MAX_EPOCHS: usize = 1000;
pub(crate) const GRAD_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub(crate) enum Link {
    Logistic,
    /// `(clip(d, -1, 1) + 1) / 2`, for a score regressed on ±1 targets.
    HalfClip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub link: Link,
}

impl LinearModel {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let x = x.as_standard_layout();
        let k = self.weights.len();
        if k == 0 {
            return vec![self.link(self.bias); x.nrows()];
        }
        x.as_slice()
            .expect("standard layout")
            .chunks_exact(k)
            .map(|r| self.link(self.bias + r.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()))
            .collect()
    }

    fn link(&self, d: f64) -> f64 {
        match self.link {
            Link::Logistic => sigmoid(d),
            Link::HalfClip => (d.clamp(-1.0, 1.0) + 1.0) / 2.0,
        }
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Penalized log-loss `Σ log(1 + e^η) − yη + (l2/2)‖w‖²` and its gradient.
/// `theta` holds the weights followed by the (unpenalized) intercept.
pub fn logistic_objective(theta: &[f64], x: ArrayView2<'_, f64>, y: &[u8], l2: f64) -> (f64, Vec<f64>) {
    let k = x.ncols();
    let mut loss = 0.0;
    let mut grad = vec![0.0; k + 1];
    for (row, &yi) in x.rows().into_iter().zip(y) {
        let eta = theta[k] + row.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
        loss += softplus(eta) - f64::from(yi) * eta;
        let r = sigmoid(eta) - f64::from(yi);
        for (g, v) in grad.iter_mut().zip(row.iter()) {
            *g += r * v;
        }
        grad[k] += r;
    }
    for j in 0..k {
        loss += 0.5 * l2 * theta[j] * theta[j];
        grad[j] += l2 * theta[j];
    }
    (loss, grad)
}

/// Cholesky solve with an LU fallback.
pub(crate) fn solve(a: DMatrix<f64>, b: DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(&b));
    }
    a.lu().solve(&b)
}

/// Damped Newton iterations until the mean gradient's max-norm drops below
/// the tolerance.
pub(crate) fn fit_logistic(
    x: ArrayView2<'_, f64>,
    y: &[u8],
    l2: f64,
    diagnostics: &mut Vec<Diagnostic>,
) -> LinearModel {
    let (n, k) = x.dim();
    let mut theta = vec![0.0; k + 1];
    let prior = y.iter().filter(|&&v| v == 1).count() as f64 / n as f64;
    theta[k] = (prior / (1.0 - prior)).ln();
    let (mut loss, mut grad) = logistic_objective(&theta, x, y, l2);
    let mut converged = false;
    let mut iterations = 0;
    let mut gnorm = f64::INFINITY;
    for it in 0..MAX_EPOCHS {
        iterations = it + 1;
        gnorm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) / n as f64;
        if gnorm <= GRAD_TOL {
            converged = true;
            break;
        }
        let mut h = DMatrix::<f64>::zeros(k + 1, k + 1);
        for row in x.rows() {
            let eta = theta[k] + row.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>();
            let p = sigmoid(eta);
            let s = (p * (1.0 - p)).max(1e-12);
            for a in 0..=k {
                let va = if a < k { row[a] } else { 1.0 };
                for b in a..=k {
                    let vb = if b < k { row[b] } else { 1.0 };
                    h[(a, b)] += s * va * vb;
                }
            }
        }
        for a in 0..=k {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
            h[(a, a)] += if a < k { l2 } else { 1e-10 };
        }
        let gvec = DVector::from_vec(grad.clone());
        let Some(step) = solve(h, gvec.clone()) else {
            break;
        };
        let decrease = step.dot(&gvec);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            let (l, g) = logistic_objective(&cand, x, y, l2);
            if l <= loss - 1e-4 * t * decrease {
                theta = cand;
                loss = l;
                grad = g;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            gnorm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) / n as f64;
            converged = gnorm <= GRAD_TOL;
            break;
        }
    }
    if !converged {
        diagnostics.push(Diagnostic::NonConvergence { iterations, gradient_norm: gnorm });
    }
    let bias = theta.pop().unwrap_or(0.0);
    LinearModel { weights: theta, bias, link: Link::Logistic }
}

/// Least squares on ±1 targets with an L2 penalty on the weights.
pub(crate) fn fit_ridge(x: ArrayView2<'_, f64>, y: &[u8], alpha: f64) -> LinearModel {
    let (n, k) = x.dim();
    let t: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
    let x_mean: Vec<f64> = (0..k).map(|j| x.column(j).sum() / n as f64).collect();
    let t_mean = t.iter().sum::<f64>() / n as f64;
    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut b = DVector::<f64>::zeros(k);
    for (row, ti) in x.rows().into_iter().zip(&t) {
        for p in 0..k {
            let vp = row[p] - x_mean[p];
            b[p] += vp * (ti - t_mean);
            for q in p..k {
                a[(p, q)] += vp * (row[q] - x_mean[q]);
            }
        }
    }
    for p in 0..k {
        for q in 0..p {
            a[(p, q)] = a[(q, p)];
        }
        a[(p, p)] += alpha.max(1e-10);
    }
    let w = solve(a, b).map(|v| v.iter().copied().collect()).unwrap_or_else(|| vec![0.0; k]);
    let bias = t_mean - x_mean.iter().zip(&w).map(|(m, w)| m * w).sum::<f64>();
    LinearModel { weights: w, bias, link: Link::HalfClip }
}

/// Hinge-loss linear SVM, `Σ hinge + (l2/2)‖w‖²`, by dual coordinate descent.
/// The intercept is an extra constant feature.
pub(crate) fn fit_svm(
    x: ArrayView2<'_, f64>,
    y: &[u8],
    l2: f64,
    seed: u64,
    diagnostics: &mut Vec<Diagnostic>,
) -> LinearModel {
    let (n, k) = x.dim();
    let c = 1.0 / l2;
    let sign: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
    let qii: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&r) + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; k + 1];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::seeded(crate::seed!(seed, "svm"));
    let mut converged = false;
    let mut gap = f64::INFINITY;
    let mut epochs = 0;
    for epoch in 0..MAX_EPOCHS {
        epochs = epoch + 1;
        order.shuffle(&mut rng);
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        for &i in &order {
            let row = x.row(i);
            let wx = w[k] + row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let g = sign[i] * wx - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / qii[i]).clamp(0.0, c);
                let delta = (alpha[i] - old) * sign[i];
                for (wj, v) in w.iter_mut().zip(row.iter()) {
                    *wj += delta * v;
                }
                w[k] += delta;
            }
        }
        gap = pg_max - pg_min;
        if gap < 1e-3 {
            converged = true;
            break;
        }
    }
    if !converged {
        diagnostics.push(Diagnostic::NonConvergence { iterations: epochs, gradient_norm: gap });
    }
    let bias = w.pop().unwrap_or(0.0);
    LinearModel { weights: w, bias, link: Link::Logistic }
}
