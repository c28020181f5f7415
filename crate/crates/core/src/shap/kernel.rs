//! Kernel SHAP: Shapley-kernel weighted least squares with the efficiency
//! constraint substituted out through the last feature.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::seq::index;
use rayon::prelude::*;

use super::{Attribution, Background, ShapConfig, ShapError, ShapMode, EXPLAINED_OUTPUT};
use crate::rng;
use crate::zoo::Classifier;

/// Upper bound on hybrid rows handed to the model in one call.
const MAX_BATCH_ROWS: usize = 4096;
const RETRY_RIDGE: f64 = 1e-10;

/// Mean model output over the background with the features in each mask
/// (bit j set = feature j from `x`) fixed to the instance values.
pub(crate) fn coalition_values(m: &dyn Classifier, x: &[f64], bg: ArrayView2<'_, f64>, masks: &[u64]) -> Vec<f64> {
    let (b, k) = bg.dim();
    let bg = bg.as_standard_layout();
    let bg = bg.as_slice().expect("standard layout");
    let per_chunk = (MAX_BATCH_ROWS / b).max(1);
    let mut out = Vec::with_capacity(masks.len());
    SCRATCH.with_borrow_mut(|buf| {
        for chunk in masks.chunks(per_chunk) {
            let rows = chunk.len() * b;
            buf.clear();
            for &mask in chunk {
                let present: Vec<usize> = (0..k).filter(|&j| mask >> j & 1 == 1).collect();
                for bg_row in bg.chunks_exact(k) {
                    let start = buf.len();
                    buf.extend_from_slice(bg_row);
                    for &j in &present {
                        buf[start + j] = x[j];
                    }
                }
            }
            let view = ArrayView2::from_shape((rows, k), &buf[..]).expect("sized");
            let p = m.positive_unchecked(view);
            out.extend(p.chunks_exact(b).map(|g| g.iter().sum::<f64>() / b as f64));
        }
    });
    out
}

thread_local! {
    /// Hybrid-row buffer reused across instances on the same worker.
    static SCRATCH: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley kernel weight of a coalition of size `s` among `k` features.
pub(crate) fn kernel_weight(k: usize, s: usize) -> f64 {
    (k - 1) as f64 / (binomial(k, s) * s as f64 * (k - s) as f64)
}

/// Row of the reduced design for a coalition: `z_j − z_last` for `j < k−1`.
fn design_row(mask: u64, k: usize) -> impl Iterator<Item = f64> {
    let last = (mask >> (k - 1) & 1) as f64;
    (0..k - 1).map(move |j| (mask >> j & 1) as f64 - last)
}

fn solve_spd(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<DMatrix<f64>, ShapError> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(&b));
    }
    let n = a.nrows();
    let ridged = a + DMatrix::identity(n, n) * RETRY_RIDGE;
    ridged.cholesky().map(|ch| ch.solve(&b)).ok_or(ShapError::SolverSingular)
}

/// Completes the reduced solution with the efficiency constraint.
fn finish(reduced: impl Iterator<Item = f64>, delta: f64) -> Vec<f64> {
    let mut phi: Vec<f64> = reduced.collect();
    let rest = delta - phi.iter().sum::<f64>();
    phi.push(rest);
    phi
}

/// Linear map from coalition values (all proper, non-empty coalitions in
/// mask order) to the reduced Shapley vector.
struct EnumeratedSolver {
    k: usize,
    masks: Vec<u64>,
    operator: DMatrix<f64>,
}

impl EnumeratedSolver {
    fn new(k: usize) -> Result<Self, ShapError> {
        let masks: Vec<u64> = (1..(1u64 << k) - 1).collect();
        let n = masks.len();
        let mut xw = DMatrix::<f64>::zeros(k - 1, n);
        let mut x = DMatrix::<f64>::zeros(n, k - 1);
        for (c, &mask) in masks.iter().enumerate() {
            let w = kernel_weight(k, mask.count_ones() as usize);
            for (j, z) in design_row(mask, k).enumerate() {
                x[(c, j)] = z;
                xw[(j, c)] = z * w;
            }
        }
        let gram = &xw * &x;
        let operator = solve_spd(gram, xw)?;
        Ok(EnumeratedSolver { k, masks, operator })
    }

    fn apply(&self, values: &[f64], base: f64, fx: f64) -> Vec<f64> {
        let delta = fx - base;
        let last = self.k - 1;
        let y = DVector::from_iterator(
            values.len(),
            self.masks.iter().zip(values).map(|(&m, v)| v - base - (m >> last & 1) as f64 * delta),
        );
        let reduced = &self.operator * y;
        finish(reduced.iter().copied(), delta)
    }
}

/// Paired coalitions: sizes drawn with probability ∝ 1/(s(k−s)) (the
/// kernel mass of each size), each mask followed by its complement.
fn sample_masks(k: usize, nsamples: usize, rng: &mut rng::Rng) -> Vec<u64> {
    let sizes: Vec<usize> = (1..k).collect();
    let dist = WeightedIndex::new(sizes.iter().map(|&s| 1.0 / (s * (k - s)) as f64)).expect("positive weights");
    let full = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
    let mut masks = Vec::with_capacity(nsamples);
    for _ in 0..nsamples / 2 {
        let s = sizes[dist.sample(rng)];
        let mask = index::sample(rng, k, s).iter().fold(0u64, |m, j| m | 1 << j);
        masks.push(mask);
        masks.push(!mask & full);
    }
    masks
}

fn solve_sampled(k: usize, masks: &[u64], values: &[f64], base: f64, fx: f64) -> Result<Vec<f64>, ShapError> {
    let delta = fx - base;
    let last = k - 1;
    let mut gram = DMatrix::<f64>::zeros(k - 1, k - 1);
    let mut rhs = DMatrix::<f64>::zeros(k - 1, 1);
    let mut row = vec![0.0; k - 1];
    for (&mask, v) in masks.iter().zip(values) {
        row.iter_mut().zip(design_row(mask, k)).for_each(|(r, z)| *r = z);
        let y = v - base - (mask >> last & 1) as f64 * delta;
        for a in 0..k - 1 {
            if row[a] == 0.0 {
                continue;
            }
            rhs[(a, 0)] += row[a] * y;
            for b in 0..k - 1 {
                gram[(a, b)] += row[a] * row[b];
            }
        }
    }
    let sol = solve_spd(gram, rhs)?;
    Ok(finish(sol.iter().copied(), delta))
}

/// Shapley values of the class-1 probability for every row of `x`.
pub fn explain(
    m: &dyn Classifier,
    x: ArrayView2<'_, f64>,
    bg: &Background,
    config: &ShapConfig,
) -> Result<Attribution, ShapError> {
    let k = m.n_features();
    for got in [x.ncols(), bg.rows.ncols()] {
        if got != k {
            return Err(ShapError::DimensionMismatch { expected: k, got });
        }
    }
    if bg.is_empty() {
        return Err(ShapError::EmptyBackground);
    }
    let bg_out = m.positive_unchecked(bg.rows.view());
    let base = bg_out.iter().sum::<f64>() / bg_out.len() as f64;
    let outputs = m.positive_unchecked(x);
    if !base.is_finite() || outputs.iter().any(|v| !v.is_finite()) {
        return Err(ShapError::NonFinite);
    }
    let mode = if k <= config.enumeration_threshold { ShapMode::Enumerated } else { ShapMode::Sampled };
    if mode == ShapMode::Sampled && config.nsamples < 2 * k + 4 {
        return Err(ShapError::TooFewSamples { nsamples: config.nsamples, needed: 2 * k + 4 });
    }
    let mut values = Array2::zeros((x.nrows(), k));
    if k == 1 {
        for (i, f) in outputs.iter().enumerate() {
            values[[i, 0]] = f - base;
        }
    } else {
        let solver = match mode {
            ShapMode::Enumerated => Some(EnumeratedSolver::new(k)?),
            ShapMode::Sampled => None,
        };
        let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let phis: Vec<Vec<f64>> = rows
            .par_iter()
            .enumerate()
            .map(|(i, row)| match &solver {
                Some(s) => Ok(s.apply(&coalition_values(m, row, bg.rows.view(), &s.masks), base, outputs[i])),
                None => {
                    let mut r = rng::seeded(crate::seed!(config.seed, "coalitions", i));
                    let masks = sample_masks(k, config.nsamples, &mut r);
                    let v = coalition_values(m, row, bg.rows.view(), &masks);
                    solve_sampled(k, &masks, &v, base, outputs[i])
                }
            })
            .collect::<Result<_, _>>()?;
        for (i, phi) in phis.into_iter().enumerate() {
            for (j, v) in phi.into_iter().enumerate() {
                values[[i, j]] = v;
            }
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ShapError::NonFinite);
    }
    Ok(Attribution { values, base, outputs, explained_output: EXPLAINED_OUTPUT.to_string(), mode })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shap::{exact_shapley_oracle, make_background};
    use crate::zoo::testutil::blobs;
    use crate::zoo::{train, Family, ModelSpec};
    use ndarray::ArrayView2;

    /// f(x) = w·x + c, clamped into [0, 1] only far outside the test range.
    struct Affine {
        w: Vec<f64>,
        c: f64,
    }

    impl Classifier for Affine {
        fn n_features(&self) -> usize {
            self.w.len()
        }

        fn positive_unchecked(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
            x.rows().into_iter().map(|r| self.c + r.iter().zip(&self.w).map(|(a, b)| a * b).sum::<f64>()).collect()
        }
    }

    #[test]
    fn kernel_weights_match_definition() {
        // k = 4, |S| = 1: 3 / (4 · 1 · 3)
        assert!((kernel_weight(4, 1) - 0.25).abs() < 1e-15);
        assert!((kernel_weight(4, 2) - 3.0 / (6.0 * 4.0)).abs() < 1e-15);
    }

    #[test]
    fn affine_model_closed_form() {
        let (x, _) = blobs(40, 5, 2, 1);
        let model = Affine { w: vec![0.03, -0.02, 0.01, 0.0, 0.05], c: 0.5 };
        let bg = make_background(x.view(), 1, 0, true).unwrap();
        let a = explain(&model, x.slice(ndarray::s![..5, ..]), &bg, &ShapConfig::default()).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = model.w[j] * (x[[i, j]] - bg.rows[[0, j]]);
                assert!((a.values[[i, j]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn enumerated_matches_oracle_and_is_efficient() {
        let (x, y) = blobs(120, 6, 3, 2);
        let m = train(&ModelSpec::new(Family::Gbc, 1).with("n_estimators", 20.0), x.view(), &y).unwrap();
        let bg = make_background(x.view(), 16, 3, false).unwrap();
        let a = explain(&m, x.slice(ndarray::s![..5, ..]), &bg, &ShapConfig::default()).unwrap();
        assert!(a.max_efficiency_gap() < 1e-9);
        for i in 0..5 {
            let oracle = exact_shapley_oracle(&m, x.row(i).as_slice().unwrap(), &bg).unwrap();
            for (j, o) in oracle.iter().enumerate() {
                assert!((a.values[[i, j]] - o).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sampled_mode_is_efficient_and_deterministic() {
        let (x, y) = blobs(200, 14, 4, 3);
        let m = train(&ModelSpec::new(Family::Lr, 1), x.view(), &y).unwrap();
        let bg = make_background(x.view(), 8, 3, false).unwrap();
        let cfg = ShapConfig { nsamples: 512, ..ShapConfig::default() };
        let a = explain(&m, x.slice(ndarray::s![..3, ..]), &bg, &cfg).unwrap();
        assert_eq!(a.mode, ShapMode::Sampled);
        assert!(a.max_efficiency_gap() < 1e-9);
        assert_eq!(a, explain(&m, x.slice(ndarray::s![..3, ..]), &bg, &cfg).unwrap());
        let too_few = ShapConfig { nsamples: 20, ..cfg };
        assert!(matches!(explain(&m, x.view(), &bg, &too_few), Err(ShapError::TooFewSamples { .. })));
    }

    #[test]
    fn unused_feature_gets_zero() {
        let (x, y) = blobs(100, 4, 1, 5);
        let m = train(&ModelSpec::new(Family::Dt, 0).with("max_depth", 1.0), x.view(), &y).unwrap();
        let bg = make_background(x.view(), 16, 1, false).unwrap();
        let a = explain(&m, x.slice(ndarray::s![..10, ..]), &bg, &ShapConfig::default()).unwrap();
        for j in 1..4 {
            assert!(a.values.column(j).iter().all(|v| v.abs() <= 1e-9));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let model = Affine { w: vec![1.0, 1.0], c: 0.0 };
        let bg = Background { rows: ndarray::array![[0.0, 0.0]], source: crate::shap::BackgroundSource::All { available: 1 } };
        let x = ndarray::array![[1.0, 2.0, 3.0]];
        assert_eq!(
            explain(&model, x.view(), &bg, &ShapConfig::default()),
            Err(ShapError::DimensionMismatch { expected: 2, got: 3 })
        );
    }
}
