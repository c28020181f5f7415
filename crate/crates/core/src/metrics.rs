//! Binary classification scores from confusion counts.
//!
//! Degenerate denominators map to zero: F1 when precision + recall is zero,
//! MCC when any marginal is empty, kappa when chance agreement is one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("y_true has {truth} entries but y_pred has {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("no instances to score")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Swaps the roles of the two classes.
    pub fn swapped(&self) -> Self {
        ConfusionCounts { tp: self.tn, fp: self.fn_, fn_: self.fp, tn: self.tp }
    }
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionCounts, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch { truth: y_true.len(), pred: y_pred.len() });
    }
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut c = ConfusionCounts::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t != 0, p != 0) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Cohen's kappa, `(p_o - p_e) / (1 - p_e)`.
pub fn kappa(c: &ConfusionCounts) -> f64 {
    let n = c.total() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p_o = (c.tp + c.tn) as f64 / n;
    let true_pos = (c.tp + c.fn_) as f64 / n;
    let pred_pos = (c.tp + c.fp) as f64 / n;
    let p_e = true_pos * pred_pos + (1.0 - true_pos) * (1.0 - pred_pos);
    if (1.0 - p_e).abs() < 1e-15 {
        return 0.0;
    }
    (p_o - p_e) / (1.0 - p_e)
}

pub fn mcc(c: &ConfusionCounts) -> f64 {
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) / denom.sqrt()
}

pub fn f1(c: &ConfusionCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        return 0.0;
    }
    2.0 * c.tp as f64 / denom as f64
}

pub fn accuracy(c: &ConfusionCounts) -> f64 {
    let n = c.total();
    if n == 0 {
        return 0.0;
    }
    (c.tp + c.tn) as f64 / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfRecord {
    pub acc: f64,
    pub f1: f64,
    pub mcc: f64,
    pub kappa: f64,
}

pub fn score(c: &ConfusionCounts) -> PerfRecord {
    PerfRecord { acc: accuracy(c), f1: f1(c), mcc: mcc(c), kappa: kappa(c) }
}

/// Thresholds class-1 probabilities at 0.5 and scores them.
pub fn score_probabilities(y_true: &[u8], p1: &[f64]) -> Result<PerfRecord, MetricsError> {
    let pred: Vec<u8> = p1.iter().map(|&p| u8::from(p > 0.5)).collect();
    Ok(score(&confusion(y_true, &pred)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn confusion_examples() {
        assert_eq!(confusion(&[1, 0], &[1, 0]).unwrap(), ConfusionCounts::new(1, 0, 0, 1));
        assert_eq!(confusion(&[1, 1], &[0, 0]).unwrap().fn_, 2);
        assert_eq!(
            confusion(&[1, 0, 1], &[1, 0]),
            Err(MetricsError::LengthMismatch { truth: 3, pred: 2 })
        );
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let t: Vec<u8> = (0..100).map(|_| rng.random_range(0..2)).collect();
        let p: Vec<u8> = (0..100).map(|_| rng.random_range(0..2)).collect();
        assert_eq!(confusion(&t, &p).unwrap().total(), 100);
    }

    #[test]
    fn hand_evaluated_fixture() {
        // p_o = 0.7, p_e = 0.5*0.6 + 0.5*0.4 = 0.5
        let c = ConfusionCounts::new(40, 20, 10, 30);
        assert_abs_diff_eq!(kappa(&c), 0.4, epsilon = 1e-12);
        let r = score(&c);
        assert_abs_diff_eq!(r.acc, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(r.f1, 80.0 / 110.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.mcc, 1000.0 / 6_000_000f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.f1, 0.7273, epsilon = 1e-4);
        assert_abs_diff_eq!(r.mcc, 0.4082, epsilon = 1e-4);
    }

    #[test]
    fn perfect_and_degenerate() {
        let r = score(&ConfusionCounts::new(5, 0, 0, 7));
        assert_eq!((r.acc, r.f1, r.mcc, r.kappa), (1.0, 1.0, 1.0, 1.0));
        // all-negative predictor on 90/10 truth
        let r = score(&ConfusionCounts::new(0, 0, 10, 90));
        assert_abs_diff_eq!(r.acc, 0.9, epsilon = 1e-12);
        assert_eq!((r.f1, r.mcc, r.kappa), (0.0, 0.0, 0.0));
        // constant on both sides
        assert_eq!(kappa(&ConfusionCounts::new(0, 0, 0, 4)), 0.0);
    }

    #[test]
    fn chance_level_kappa_monte_carlo() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut total = 0.0;
        let draws = 10_000;
        for _ in 0..draws {
            let t: Vec<u8> = (0..50).map(|_| u8::from(rng.random::<f64>() < 0.3)).collect();
            let p: Vec<u8> = (0..50).map(|_| u8::from(rng.random::<f64>() < 0.3)).collect();
            total += kappa(&confusion(&t, &p).unwrap());
        }
        assert!((total / draws as f64).abs() < 0.02);
    }

    fn small_matrices(max_total: u64) -> impl Iterator<Item = ConfusionCounts> {
        (0..=max_total).flat_map(move |tp| {
            (0..=max_total - tp).flat_map(move |fp| {
                (0..=max_total - tp - fp).flat_map(move |fn_| {
                    (0..=max_total - tp - fp - fn_)
                        .map(move |tn| ConfusionCounts::new(tp, fp, fn_, tn))
                })
            })
        })
    }

    #[test]
    fn all_outputs_finite_and_in_range() {
        for c in small_matrices(50).filter(|c| c.total() >= 1) {
            let r = score(&c);
            assert!(r.acc.is_finite() && (0.0..=1.0).contains(&r.acc));
            assert!(r.f1.is_finite() && (0.0..=1.0).contains(&r.f1));
            assert!(r.mcc.is_finite() && (-1.0 - 1e-12..=1.0 + 1e-12).contains(&r.mcc));
            assert!(r.kappa.is_finite() && (-1.0 - 1e-12..=1.0 + 1e-12).contains(&r.kappa));
        }
    }

    #[test]
    fn label_swap_symmetry() {
        for c in small_matrices(12).filter(|c| c.total() >= 1) {
            let a = score(&c);
            let b = score(&c.swapped());
            assert_abs_diff_eq!(a.acc, b.acc, epsilon = 1e-12);
            assert_abs_diff_eq!(a.mcc, b.mcc, epsilon = 1e-12);
            assert_abs_diff_eq!(a.kappa, b.kappa, epsilon = 1e-12);
        }
    }

    #[test]
    fn kappa_equals_mcc_for_symmetric_errors() {
        for c in small_matrices(20).filter(|c| c.total() >= 1 && c.fp == c.fn_) {
            assert_abs_diff_eq!(kappa(&c), mcc(&c), epsilon = 1e-12);
        }
    }
}
