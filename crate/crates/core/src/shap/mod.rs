//! Model-agnostic Shapley attributions of the class-1 probability.
//!
//! The value of a coalition `S` for an instance `x` is the mean model output
//! over background rows with the features in `S` taken from `x`
//! (interventional expectation). [`explain`] solves the Shapley-kernel
//! weighted least squares problem, enumerating every coalition for small
//! feature counts and sampling paired coalitions otherwise;
//! [`exact_shapley_oracle`] evaluates the Shapley sum directly.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

mod exact;
mod kernel;

pub use exact::{exact_shapley_oracle, ORACLE_MAX_FEATURES};
pub use kernel::explain;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapError {
    #[error("expected {expected} feature columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("nsamples = {nsamples} is below the minimum 2K+4 = {needed}")]
    TooFewSamples { nsamples: usize, needed: usize },
    #[error("weighted least squares system is singular even after ridge regularization")]
    SolverSingular,
    #[error("exact enumeration supports at most {max} features, got {k}")]
    TooManyFeatures { k: usize, max: usize },
    #[error("background needs at least one row")]
    EmptyBackground,
    #[error("model output is not finite")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackgroundSource {
    /// Every available row.
    All { available: usize },
    /// Uniform draw without replacement.
    Sample { available: usize, seed: u64 },
    /// A single row of per-feature means.
    Mean { available: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub rows: Array2<f64>,
    pub source: BackgroundSource,
}

impl Background {
    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }
}

/// Draws `b` training rows uniformly without replacement (all rows when
/// `b` covers them), kept in their original order. With `mean_row` the
/// background collapses to the per-feature mean.
pub fn make_background(x: ArrayView2<'_, f64>, b: usize, seed: u64, mean_row: bool) -> Result<Background, ShapError> {
    let n = x.nrows();
    if n == 0 || b == 0 {
        return Err(ShapError::EmptyBackground);
    }
    if mean_row {
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        return Ok(Background { rows: mean.insert_axis(Axis(0)), source: BackgroundSource::Mean { available: n } });
    }
    if b >= n {
        return Ok(Background { rows: x.to_owned(), source: BackgroundSource::All { available: n } });
    }
    let mut picked = index::sample(&mut rng::seeded(seed), n, b).into_vec();
    picked.sort_unstable();
    Ok(Background { rows: x.select(Axis(0), &picked), source: BackgroundSource::Sample { available: n, seed } })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapConfig {
    /// Background rows drawn from the training data.
    pub background: usize,
    /// Use a single per-feature mean row as background.
    pub mean_background: bool,
    /// Coalitions per instance in sampled mode.
    pub nsamples: usize,
    /// Largest feature count explained by full enumeration.
    pub enumeration_threshold: usize,
    /// Stream seed for sampled mode.
    pub seed: u64,
}

impl Default for ShapConfig {
    fn default() -> Self {
        ShapConfig { background: 64, mean_background: false, nsamples: 2048, enumeration_threshold: 12, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapMode {
    Enumerated,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    /// Instances × features.
    pub values: Array2<f64>,
    /// Mean model output over the background.
    pub base: f64,
    /// Model output for each explained instance.
    pub outputs: Vec<f64>,
    pub explained_output: String,
    pub mode: ShapMode,
}

pub const EXPLAINED_OUTPUT: &str = "probability of class 1";

impl Attribution {
    /// Largest `|Σφ − (f(x) − base)|` over instances.
    pub fn max_efficiency_gap(&self) -> f64 {
        self.values
            .rows()
            .into_iter()
            .zip(&self.outputs)
            .map(|(r, f)| (r.sum() - (f - self.base)).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-feature mean |φ| of one model at one (size, fold) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportance {
    pub per_feature: Vec<f64>,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub size: usize,
    #[serde(default)]
    pub fold: usize,
}

impl GlobalImportance {
    pub fn new(per_feature: Vec<f64>) -> Self {
        GlobalImportance { per_feature, model: String::new(), size: 0, fold: 0 }
    }

    pub fn tagged(mut self, model: &str, size: usize, fold: usize) -> Self {
        self.model = model.to_string();
        self.size = size;
        self.fold = fold;
        self
    }

    pub fn len(&self) -> usize {
        self.per_feature.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_feature.is_empty()
    }
}

/// `(1/N) Σ_n |φ_{n,k}|` for every feature `k`.
pub fn aggregate(a: &Attribution) -> GlobalImportance {
    let n = a.values.nrows().max(1) as f64;
    let per_feature = a.values.columns().into_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>() / n).collect();
    GlobalImportance::new(per_feature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn background_sizes() {
        let x = Array2::from_shape_fn((768, 3), |(i, j)| (i * 3 + j) as f64);
        let all = make_background(x.view(), 1000, 1, false).unwrap();
        assert_eq!(all.rows, x);
        let a = make_background(x.view(), 64, 7, false).unwrap();
        let b = make_background(x.view(), 64, 7, false).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        let m = make_background(x.view(), 1, 7, true).unwrap();
        assert_eq!(m.rows, array![[383.5 * 3.0, 383.5 * 3.0 + 1.0, 383.5 * 3.0 + 2.0]]);
        assert_eq!(make_background(x.slice(ndarray::s![0..0, ..]), 4, 0, false), Err(ShapError::EmptyBackground));
    }

    fn attribution(values: Array2<f64>) -> Attribution {
        let n = values.nrows();
        Attribution { values, base: 0.0, outputs: vec![0.0; n], explained_output: EXPLAINED_OUTPUT.into(), mode: ShapMode::Enumerated }
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate(&attribution(array![[-0.5, 0.25]])).per_feature, vec![0.5, 0.25]);
        assert_eq!(aggregate(&attribution(Array2::zeros((3, 2)))).per_feature, vec![0.0, 0.0]);
        let g = aggregate(&attribution(array![[0.2], [-0.4]]));
        assert!((g.per_feature[0] - 0.3).abs() < 1e-15);
    }
}
