//! Family benchmark, kappa ranking, top-k selection and Rashōmon-set
//! membership.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::FoldPlan;
use crate::zoo::{cv_kappa, random_search, Family, ModelSpec, ZooError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectError {
    #[error("need at least {needed} candidate families, got {got}")]
    TooFewFamilies { needed: usize, got: usize },
    #[error("every candidate family failed to train")]
    AllFamiliesFailed,
    #[error("baseline logistic regression failed: {0}")]
    Baseline(ZooError),
    #[error("epsilon must be finite and non-negative, got {0}")]
    BadEpsilon(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedModel {
    pub spec: ModelSpec,
    pub mean_kappa: f64,
    pub sd_kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFailure {
    pub family: Family,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Descending mean kappa; ties by smaller sd, then family name.
    pub ranked: Vec<RankedModel>,
    pub top: Vec<ModelSpec>,
    /// Logistic regression with default hyperparameters.
    pub baseline: RankedModel,
    pub failures: Vec<FamilyFailure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectOptions {
    pub budget: usize,
    pub seed: u64,
    pub top_k: usize,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions { budget: 20, seed: 0, top_k: 3 }
    }
}

/// Tunes every family by random search on `folds`, ranks by mean CV kappa
/// and keeps the best `top_k`.
pub fn select(
    x: ArrayView2<'_, f64>,
    y: &[u8],
    families: &[Family],
    folds: &FoldPlan,
    opts: SelectOptions,
) -> Result<SelectionResult, SelectError> {
    if families.len() < opts.top_k.max(1) {
        return Err(SelectError::TooFewFamilies { needed: opts.top_k.max(1), got: families.len() });
    }
    let outcomes: Vec<(Family, Result<RankedModel, ZooError>)> = families
        .par_iter()
        .map(|&f| {
            let r = random_search(f, x, y, opts.budget, folds, opts.seed)
                .map(|s| RankedModel { spec: s.spec, mean_kappa: s.mean_kappa, sd_kappa: s.sd_kappa });
            (f, r)
        })
        .collect();
    let mut ranked = Vec::new();
    let mut failures = Vec::new();
    for (family, r) in outcomes {
        match r {
            Ok(m) => ranked.push(m),
            Err(e) => {
                log::warn!("{family} dropped from selection: {e}");
                failures.push(FamilyFailure { family, reason: e.to_string() });
            }
        }
    }
    if ranked.is_empty() {
        return Err(SelectError::AllFamiliesFailed);
    }
    sort_ranked(&mut ranked);
    let top = ranked.iter().take(opts.top_k).map(|m| m.spec.clone()).collect();
    let baseline_spec = ModelSpec::new(Family::Lr, crate::seed!(opts.seed, "baseline"));
    let (mean, sd) = cv_kappa(&baseline_spec, x, y, folds).map_err(SelectError::Baseline)?;
    Ok(SelectionResult {
        ranked,
        top,
        baseline: RankedModel { spec: baseline_spec, mean_kappa: mean, sd_kappa: sd },
        failures,
    })
}

pub(crate) fn sort_ranked(ranked: &mut [RankedModel]) {
    ranked.sort_by(|a, b| {
        b.mean_kappa
            .total_cmp(&a.mean_kappa)
            .then(a.sd_kappa.total_cmp(&b.sd_kappa))
            .then(a.spec.family.name().cmp(b.spec.family.name()))
    });
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RashomonSet {
    /// `L(f*) = 1 − κ(f*)` of the best ranked model.
    pub reference_loss: f64,
    pub epsilon: f64,
    pub members: Vec<ModelSpec>,
    /// True when every selected model is a member.
    pub top_within: bool,
}

/// Tolerance absorbing rounding in `L(f) ≤ L(f*) + ε`.
const MEMBERSHIP_TOL: f64 = 1e-12;

/// Models with `1 − κ ≤ L(f*) + ε`.
pub fn rashomon_membership(sel: &SelectionResult, epsilon: f64) -> Result<RashomonSet, SelectError> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(SelectError::BadEpsilon(epsilon));
    }
    let reference_loss = sel.ranked.iter().map(|m| 1.0 - m.mean_kappa).fold(f64::INFINITY, f64::min);
    let members: Vec<ModelSpec> = sel
        .ranked
        .iter()
        .filter(|m| 1.0 - m.mean_kappa <= reference_loss + epsilon + MEMBERSHIP_TOL)
        .map(|m| m.spec.clone())
        .collect();
    let top_within = sel.top.iter().all(|t| members.contains(t));
    if !top_within {
        log::warn!("selected models fall outside the Rashomon set at epsilon = {epsilon}");
    }
    Ok(RashomonSet { reference_loss, epsilon, members, top_within })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_folds;
    use crate::zoo::testutil::blobs;
    use proptest::prelude::*;

    fn fake(kappas: &[f64]) -> SelectionResult {
        let ranked: Vec<RankedModel> = kappas
            .iter()
            .enumerate()
            .map(|(i, &k)| RankedModel { spec: ModelSpec::new(Family::ALL[i], 0), mean_kappa: k, sd_kappa: 0.0 })
            .collect();
        SelectionResult {
            top: ranked.iter().take(3).map(|m| m.spec.clone()).collect(),
            baseline: ranked[0].clone(),
            ranked,
            failures: vec![],
        }
    }

    #[test]
    fn membership_examples() {
        let sel = fake(&[0.60, 0.58, 0.55, 0.40]);
        let r = rashomon_membership(&sel, 0.05).unwrap();
        assert_eq!(r.members, sel.ranked[..3].iter().map(|m| m.spec.clone()).collect::<Vec<_>>());
        assert!(r.top_within);
        assert_eq!(rashomon_membership(&sel, 0.0).unwrap().members.len(), 1);
        assert_eq!(rashomon_membership(&sel, 1.0).unwrap().members.len(), 4);
        assert!(!rashomon_membership(&sel, 0.01).unwrap().top_within);
        assert!(rashomon_membership(&sel, -0.1).is_err());
    }

    proptest! {
        #[test]
        fn membership_monotone_and_shift_invariant(
            kappas in proptest::collection::vec(-0.5f64..1.0, 4..10),
            e1 in 0.0f64..0.5, de in 0.0f64..0.5, shift in -0.2f64..0.2,
        ) {
            let sel = fake(&kappas);
            let small = rashomon_membership(&sel, e1).unwrap().members;
            let large = rashomon_membership(&sel, e1 + de).unwrap().members;
            prop_assert!(small.iter().all(|m| large.contains(m)));
            let best = sel.ranked.iter().max_by(|a, b| a.mean_kappa.total_cmp(&b.mean_kappa)).unwrap();
            prop_assert!(small.contains(&best.spec));
            let shifted = fake(&kappas.iter().map(|k| k + shift).collect::<Vec<_>>());
            let s = rashomon_membership(&shifted, e1 + 1e-9).unwrap().members;
            let u = rashomon_membership(&sel, e1 + 1e-9).unwrap().members;
            // a shift moves values by rounding only; allow boundary cases
            prop_assert!(s.len().abs_diff(u.len()) <= 1);
        }
    }

    #[test]
    fn three_families_all_selected_in_order() {
        let (x, y) = blobs(120, 3, 2, 1);
        let folds = make_folds(120, &y, 5, 1).unwrap();
        let fams = [Family::Nb, Family::Lr, Family::Dt];
        let opts = SelectOptions { budget: 2, seed: 1, top_k: 3 };
        let s = select(x.view(), &y, &fams, &folds, opts).unwrap();
        assert_eq!(s.top.len(), 3);
        assert!(s.ranked.windows(2).all(|w| w[0].mean_kappa >= w[1].mean_kappa));
        assert_eq!(s, select(x.view(), &y, &fams, &folds, opts).unwrap());
        let too_few = select(x.view(), &y, &fams[..2], &folds, opts);
        assert_eq!(too_few.unwrap_err(), SelectError::TooFewFamilies { needed: 3, got: 2 });
    }

    #[test]
    fn separable_data_puts_lr_first_with_perfect_kappa() {
        // clean margin, no label noise
        let n = 100;
        let x = ndarray::Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { i as f64 + if i >= 50 { 40.0 } else { 0.0 } } else { (i % 7) as f64 });
        let y: Vec<u8> = (0..n).map(|i| u8::from(i >= 50)).collect();
        let folds = make_folds(n, &y, 5, 3).unwrap();
        let s = select(x.view(), &y, &[Family::Lr, Family::Nb, Family::Knn], &folds, SelectOptions { budget: 3, seed: 2, top_k: 3 })
            .unwrap();
        assert_eq!(s.baseline.mean_kappa, 1.0);
        assert_eq!(s.ranked[0].mean_kappa, 1.0);
        let lr = s.ranked.iter().find(|m| m.spec.family == Family::Lr).unwrap();
        assert_eq!(lr.mean_kappa, 1.0);
    }
}
