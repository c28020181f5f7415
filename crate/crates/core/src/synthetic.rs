//! Seeded synthetic datasets with known structure.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{DataError, Dataset};
use crate::rng;

/// Gaussian features; the label is the sign of a weighted sum of the first
/// `weights.len()` features, then flipped with probability `flip`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedSpec {
    pub n: usize,
    pub k: usize,
    pub weights: Vec<f64>,
    pub flip: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec { n: 4096, k: 10, weights: vec![2.0, 1.5, 1.0], flip: 0.1, seed: 17 }
    }
}

pub fn planted(spec: &PlantedSpec) -> Result<Dataset, DataError> {
    let mut r = rng::seeded(crate::seed!(spec.seed, "planted"));
    let mut x = Array2::zeros((spec.n, spec.k));
    let mut labels = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let mut score = 0.0;
        for j in 0..spec.k {
            let v: f64 = r.sample(StandardNormal);
            x[[i, j]] = v;
            if let Some(w) = spec.weights.get(j) {
                score += w * v;
            }
        }
        let clean = score > 0.0;
        let flipped = r.random::<f64>() < spec.flip;
        labels.push(u8::from(clean != flipped));
    }
    let names = (0..spec.k).map(|j| format!("x{j}")).collect();
    Dataset::new("planted", x, labels, names)
}

/// Two informative features whose interaction (XOR of signs) sets the label.
pub fn xor(n: usize, noise_features: usize, seed: u64) -> Result<Dataset, DataError> {
    let mut r = rng::seeded(crate::seed!(seed, "xor"));
    let k = 2 + noise_features;
    let mut x = Array2::zeros((n, k));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..k {
            x[[i, j]] = r.random_range(-1.0..1.0);
        }
        labels.push(u8::from((x[[i, 0]] > 0.0) != (x[[i, 1]] > 0.0)));
    }
    let names = (0..k).map(|j| format!("x{j}")).collect();
    Dataset::new("xor", x, labels, names)
}
