//! SAMME AdaBoost on stumps and gradient boosting on log-loss.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::tree::{grow, Binner, GrowParams, Tree};
use super::{sigmoid, ModelSpec};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct AdaBoost {
    stumps: Vec<Tree>,
    alphas: Vec<f64>,
}

impl AdaBoost {
    /// `σ(Σ α_m (2h_m − 1) / Σ α_m)`, the binary SAMME probability.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let total: f64 = self.alphas.iter().sum();
        let mut buf = vec![0.0; x.ncols()];
        x.rows()
            .into_iter()
            .map(|r| {
                buf.iter_mut().zip(r.iter()).for_each(|(b, v)| *b = *v);
                let vote: f64 =
                    self.stumps.iter().zip(&self.alphas).map(|(s, a)| a * (2.0 * s.predict_row(&buf) - 1.0)).sum();
                sigmoid(vote / total)
            })
            .collect()
    }
}

pub(crate) fn fit_ada(x: ArrayView2<'_, f64>, y: &[u8], spec: &ModelSpec) -> AdaBoost {
    let n = y.len();
    let rounds = spec.int("n_estimators");
    let lr = spec.param("learning_rate");
    let binner = Binner::fit(x);
    let binned = binner.transform(x);
    let target: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let mut weight = vec![1.0 / n as f64; n];
    let params = GrowParams { max_depth: 1, min_leaf: 1, max_features: x.ncols(), random_splits: false };
    let rows: Vec<u32> = (0..n as u32).collect();
    let mut model = AdaBoost { stumps: Vec::new(), alphas: Vec::new() };
    for m in 0..rounds {
        let mut rng = rng::seeded(crate::seed!(spec.seed, "ada", m));
        let majority = |leaf: &[u32]| {
            let (mut w, mut s) = (0.0, 0.0);
            for &r in leaf {
                w += weight[r as usize];
                s += weight[r as usize] * target[r as usize];
            }
            if s > 0.5 * w {
                1.0
            } else {
                0.0
            }
        };
        let stump = grow(&binned, &binner, rows.clone(), &target, &weight, params, &mut rng, &majority);
        let h = stump.predict(x);
        let miss: Vec<bool> = h.iter().zip(&target).map(|(a, b)| a != b).collect();
        let w_sum: f64 = weight.iter().sum();
        let err = weight.iter().zip(&miss).filter(|(_, &m)| m).map(|(w, _)| w).sum::<f64>() / w_sum;
        if err >= 0.5 {
            if model.stumps.is_empty() {
                model.stumps.push(stump);
                model.alphas.push(1.0);
            }
            break;
        }
        let alpha = lr * ((1.0 - err).max(1e-10) / err.max(1e-10)).ln();
        model.stumps.push(stump);
        model.alphas.push(alpha);
        if err <= 0.0 {
            break;
        }
        for (w, &m) in weight.iter_mut().zip(&miss) {
            if m {
                *w *= alpha.exp();
            }
        }
        let total: f64 = weight.iter().sum();
        weight.iter_mut().for_each(|w| *w /= total);
    }
    model
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct GradientBoosting {
    init: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
}

impl GradientBoosting {
    fn raw(&self, row: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut buf = vec![0.0; x.ncols()];
        x.rows()
            .into_iter()
            .map(|r| {
                buf.iter_mut().zip(r.iter()).for_each(|(b, v)| *b = *v);
                sigmoid(self.raw(&buf))
            })
            .collect()
    }
}

/// Each round fits a regression tree to the log-loss residuals and sets
/// leaves by one Newton step.
pub(crate) fn fit_gbc(x: ArrayView2<'_, f64>, y: &[u8], spec: &ModelSpec) -> GradientBoosting {
    let n = y.len();
    let rounds = spec.int("n_estimators");
    let lr = spec.param("learning_rate");
    let binner = Binner::fit(x);
    let binned = binner.transform(x);
    let target: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let prior = target.iter().sum::<f64>() / n as f64;
    let init = (prior / (1.0 - prior)).ln();
    let params =
        GrowParams { max_depth: spec.int("max_depth"), min_leaf: 1, max_features: x.ncols(), random_splits: false };
    let ones = vec![1.0; n];
    let rows: Vec<u32> = (0..n as u32).collect();
    let mut f = vec![init; n];
    let mut trees = Vec::with_capacity(rounds);
    for m in 0..rounds {
        let p: Vec<f64> = f.iter().map(|&v| sigmoid(v)).collect();
        let resid: Vec<f64> = target.iter().zip(&p).map(|(y, p)| y - p).collect();
        let newton = |leaf: &[u32]| {
            let (mut num, mut den) = (0.0, 0.0);
            for &r in leaf {
                num += resid[r as usize];
                den += p[r as usize] * (1.0 - p[r as usize]);
            }
            if den < 1e-12 {
                0.0
            } else {
                num / den
            }
        };
        let mut rng = rng::seeded(crate::seed!(spec.seed, "gbc", m));
        let tree = grow(&binned, &binner, rows.clone(), &resid, &ones, params, &mut rng, &newton);
        for (fi, d) in f.iter_mut().zip(tree.predict(x)) {
            *fi += lr * d;
        }
        trees.push(tree);
    }
    GradientBoosting { init, learning_rate: lr, trees }
}
