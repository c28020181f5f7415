//! k-nearest neighbours on (already standardized) Euclidean distance.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Knn {
    k: usize,
    n_features: usize,
    /// Row-major training matrix.
    points: Vec<f64>,
    labels: Vec<u8>,
}

impl Knn {
    pub fn fit(x: ArrayView2<'_, f64>, y: &[u8], k: usize) -> Self {
        Knn { k: k.clamp(1, y.len()), n_features: x.ncols(), points: x.iter().copied().collect(), labels: y.to_vec() }
    }

    /// Fraction of class-1 labels among the `k` closest training rows; equal
    /// distances are resolved by training order.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut dist: Vec<(f64, u32)> = Vec::with_capacity(self.labels.len());
        x.rows()
            .into_iter()
            .map(|q| {
                dist.clear();
                for (i, p) in self.points.chunks_exact(self.n_features).enumerate() {
                    let d: f64 = p.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                    dist.push((d, i as u32));
                }
                let cmp = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                if self.k < dist.len() {
                    dist.select_nth_unstable_by(self.k - 1, cmp);
                }
                let pos = dist[..self.k].iter().filter(|(_, i)| self.labels[*i as usize] == 1).count();
                pos as f64 / self.k as f64
            })
            .collect()
    }
}
