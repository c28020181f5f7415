//! Random hyperparameter search scored by cross-validated Cohen's kappa.

use ndarray::{ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{train, Classifier, Family, ModelSpec, ZooError};
use crate::data::FoldPlan;
use crate::metrics;
use crate::rng;

fn log_uniform(rng: &mut rng::Rng, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo.log10()..=hi.log10()))
}

fn draw(family: Family, seed: u64) -> ModelSpec {
    let mut r = rng::seeded(crate::seed!(seed, "params"));
    let spec = ModelSpec::new(family, seed);
    let depth_leaf = |r: &mut rng::Rng, s: ModelSpec| {
        s.with("max_depth", r.random_range(2..=16) as f64)
            .with("min_leaf", [1.0, 2.0, 4.0, 8.0][r.random_range(0..4)])
    };
    match family {
        Family::Lr | Family::Svm => spec.with("l2", log_uniform(&mut r, 1e-4, 1e2)),
        Family::Ridge => spec.with("alpha", log_uniform(&mut r, 1e-4, 1e2)),
        Family::Lda | Family::Qda => spec.with("shrinkage", r.random_range(0.0..=0.5)),
        Family::Nb => spec.with("var_smoothing", log_uniform(&mut r, 1e-10, 1e-6)),
        Family::Dt => depth_leaf(&mut r, spec),
        Family::Rf | Family::Et => {
            let s = depth_leaf(&mut r, spec);
            s.with("n_trees", r.random_range(50..=300) as f64)
        }
        Family::Ada | Family::Gbc => spec
            .with("n_estimators", r.random_range(50..=300) as f64)
            .with("learning_rate", log_uniform(&mut r, 0.01, 1.0)),
        Family::Knn => spec.with("k", (2 * r.random_range(0..=15) + 1) as f64),
    }
}

/// The `budget` candidate configurations, in draw order.
pub fn sample_configs(family: Family, budget: usize, seed: u64) -> Vec<ModelSpec> {
    (0..budget).map(|i| draw(family, crate::seed!(seed, family.name(), i))).collect()
}

/// Mean and sample standard deviation of per-fold kappa.
pub fn cv_kappa(spec: &ModelSpec, x: ArrayView2<'_, f64>, y: &[u8], folds: &FoldPlan) -> Result<(f64, f64), ZooError> {
    let mut scores = Vec::with_capacity(folds.k);
    for f in 0..folds.k {
        let tr = folds.train_indices(f);
        let te = folds.test_indices(f);
        let ytr: Vec<u8> = tr.iter().map(|&i| y[i]).collect();
        let yte: Vec<u8> = te.iter().map(|&i| y[i]).collect();
        let m = train(spec, x.select(Axis(0), &tr).view(), &ytr)?;
        let p = m.positive_unchecked(x.select(Axis(0), &te).view());
        let pred: Vec<u8> = p.iter().map(|&v| u8::from(v > 0.5)).collect();
        let c = metrics::confusion(&yte, &pred).expect("fold is non-empty");
        scores.push(metrics::kappa(&c));
    }
    Ok(mean_sd(&scores))
}

pub(crate) fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub spec: ModelSpec,
    /// `None` when training failed on some fold.
    pub mean_kappa: Option<f64>,
    pub sd_kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub spec: ModelSpec,
    pub mean_kappa: f64,
    pub sd_kappa: f64,
    pub trials: Vec<Trial>,
}

/// Best of `budget` sampled configurations by mean CV kappa; the earliest
/// draw wins ties.
pub fn random_search(
    family: Family,
    x: ArrayView2<'_, f64>,
    y: &[u8],
    budget: usize,
    folds: &FoldPlan,
    seed: u64,
) -> Result<SearchResult, ZooError> {
    let mut best: Option<(usize, f64, f64)> = None;
    let mut trials = Vec::with_capacity(budget);
    for (i, spec) in sample_configs(family, budget.max(1), seed).into_iter().enumerate() {
        match cv_kappa(&spec, x, y, folds) {
            Ok((mean, sd)) => {
                if best.is_none_or(|(_, b, _)| mean > b) {
                    best = Some((i, mean, sd));
                }
                trials.push(Trial { spec, mean_kappa: Some(mean), sd_kappa: Some(sd) });
            }
            Err(e) => {
                log::debug!("{family} config {i} failed: {e}");
                trials.push(Trial { spec, mean_kappa: None, sd_kappa: None });
            }
        }
    }
    let (i, mean_kappa, sd_kappa) = best.ok_or(ZooError::AllConfigsFailed)?;
    Ok(SearchResult { spec: trials[i].spec.clone(), mean_kappa, sd_kappa, trials })
}
