//! Direct Shapley sum over all subsets, independent of the regression path.

use ndarray::Array2;

use super::{Background, ShapError};
use crate::zoo::Classifier;

pub const ORACLE_MAX_FEATURES: usize = 12;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// `φ_i = Σ_{S ⊆ N∖{i}} |S|!(K−|S|−1)!/K! · (v(S ∪ {i}) − v(S))` with the
/// interventional value function over `bg`.
pub fn exact_shapley_oracle(m: &dyn Classifier, x: &[f64], bg: &Background) -> Result<Vec<f64>, ShapError> {
    let k = m.n_features();
    if x.len() != k || bg.rows.ncols() != k {
        return Err(ShapError::DimensionMismatch { expected: k, got: if x.len() != k { x.len() } else { bg.rows.ncols() } });
    }
    if k > ORACLE_MAX_FEATURES {
        return Err(ShapError::TooManyFeatures { k, max: ORACLE_MAX_FEATURES });
    }
    if bg.is_empty() {
        return Err(ShapError::EmptyBackground);
    }
    // v(S) for every subset, one background-sized batch per subset
    let b = bg.len();
    let value: Vec<f64> = (0..1usize << k)
        .map(|subset| {
            let mut rows = bg.rows.clone();
            for mut row in rows.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    if subset & (1 << j) != 0 {
                        *v = x[j];
                    }
                }
            }
            let rows: Array2<f64> = rows;
            m.positive_unchecked(rows.view()).iter().sum::<f64>() / b as f64
        })
        .collect();
    let kf = factorial(k);
    let phi = (0..k)
        .map(|i| {
            (0..1usize << k)
                .filter(|s| s & (1 << i) == 0)
                .map(|s| {
                    let size = s.count_ones() as usize;
                    factorial(size) * factorial(k - size - 1) / kf * (value[s | 1 << i] - value[s])
                })
                .sum()
        })
        .collect();
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shap::BackgroundSource;
    use ndarray::{array, ArrayView2};

    struct Sum;

    impl Classifier for Sum {
        fn n_features(&self) -> usize {
            2
        }
        fn positive_unchecked(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
            x.rows().into_iter().map(|r| (r[0] + r[1]) / 10.0).collect()
        }
    }

    struct Constant;

    impl Classifier for Constant {
        fn n_features(&self) -> usize {
            3
        }
        fn positive_unchecked(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
            vec![0.3; x.nrows()]
        }
    }

    #[test]
    fn symmetry_on_exchangeable_features() {
        let bg = Background { rows: array![[1.0, 2.0], [2.0, 1.0]], source: BackgroundSource::All { available: 2 } };
        let phi = exact_shapley_oracle(&Sum, &[3.0, 3.0], &bg).unwrap();
        assert!((phi[0] - phi[1]).abs() < 1e-15);
    }

    #[test]
    fn constant_model_gets_nothing() {
        let bg = Background { rows: array![[1.0, 2.0, 3.0]], source: BackgroundSource::All { available: 1 } };
        assert_eq!(exact_shapley_oracle(&Constant, &[0.0, 5.0, 1.0], &bg).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn refuses_wide_inputs() {
        struct Wide;
        impl Classifier for Wide {
            fn n_features(&self) -> usize {
                13
            }
            fn positive_unchecked(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
                vec![0.0; x.nrows()]
            }
        }
        let bg = Background { rows: Array2::zeros((1, 13)), source: BackgroundSource::All { available: 1 } };
        assert_eq!(
            exact_shapley_oracle(&Wide, &[0.0; 13], &bg),
            Err(ShapError::TooManyFeatures { k: 13, max: 12 })
        );
    }
}
