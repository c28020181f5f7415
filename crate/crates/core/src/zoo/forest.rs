//! Single decision trees and random / extremely randomized forests.

use ndarray::ArrayView2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, weighted_mean, Binner, GrowParams, Tree};
use super::{Family, ModelSpec};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Forest {
    trees: Vec<Tree>,
}

impl Forest {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut out = vec![0.0; x.nrows()];
        let mut buf = vec![0.0; x.ncols()];
        for (o, r) in out.iter_mut().zip(x.rows()) {
            buf.iter_mut().zip(r.iter()).for_each(|(b, v)| *b = *v);
            *o = self.trees.iter().map(|t| t.predict_row(&buf)).sum::<f64>() / self.trees.len() as f64;
        }
        out
    }
}

fn grow_params(spec: &ModelSpec, k: usize) -> GrowParams {
    let requested = spec.int("max_features");
    let max_features = match (requested, spec.family) {
        (0, Family::Dt) => k,
        (0, _) => ((k as f64).sqrt().round() as usize).max(1),
        (m, _) => m.min(k),
    };
    GrowParams {
        max_depth: spec.int("max_depth"),
        min_leaf: spec.int("min_leaf"),
        max_features,
        random_splits: match spec.family {
            Family::Dt => spec.int("random_splits") == 1,
            Family::Et => true,
            _ => false,
        },
    }
}

fn fit_trees(x: ArrayView2<'_, f64>, y: &[u8], spec: &ModelSpec, n_trees: usize, bootstrap: bool) -> Vec<Tree> {
    let n = y.len();
    let params = grow_params(spec, x.ncols());
    let binner = Binner::fit(x);
    let binned = binner.transform(x);
    let target: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    (0..n_trees)
        .map(|t| {
            let mut rng = rng::seeded(crate::seed!(spec.seed, "tree", t));
            let mut weight = vec![1.0; n];
            if bootstrap {
                weight.fill(0.0);
                for _ in 0..n {
                    weight[rng.random_range(0..n)] += 1.0;
                }
            }
            let rows: Vec<u32> = (0..n as u32).filter(|&r| weight[r as usize] > 0.0).collect();
            let leaf = weighted_mean(&target, &weight);
            grow(&binned, &binner, rows, &target, &weight, params, &mut rng, &leaf)
        })
        .collect()
}

pub(crate) fn fit_single_tree(x: ArrayView2<'_, f64>, y: &[u8], spec: &ModelSpec) -> Tree {
    fit_trees(x, y, spec, 1, false).pop().expect("one tree")
}

pub(crate) fn fit_forest(x: ArrayView2<'_, f64>, y: &[u8], spec: &ModelSpec) -> Forest {
    Forest { trees: fit_trees(x, y, spec, spec.int("n_trees"), spec.int("bootstrap") == 1) }
}
