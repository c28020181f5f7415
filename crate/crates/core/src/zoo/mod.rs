//! Classifier families implemented in-crate, the bagging combiner, and
//! hyperparameter random search.
//!
//! All families expose the same surface: [`train`] returns a [`TrainedModel`]
//! and every fitted model implements [`Classifier`], whose only required
//! output is the probability of class 1.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Standardizer;

mod bagging;
mod boost;
mod discriminant;
mod forest;
mod knn;
mod linear;
pub mod persist;
pub mod search;
pub mod tree;

pub use bagging::{bag, BaggingEnsemble};
pub use linear::logistic_objective;
pub use search::{cv_kappa, random_search, sample_configs, SearchResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZooError {
    #[error("covariance matrix is singular even after shrinkage repair")]
    SingularCovariance,
    #[error("expected {expected} feature columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{rows} rows but {labels} labels")]
    LabelMismatch { rows: usize, labels: usize },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("{family} needs at least {needed} instances per class")]
    TooFewPerClass { family: Family, needed: usize },
    #[error("training data contains non-finite values")]
    NonFinite,
    #[error("invalid hyperparameter for {family}: {message}")]
    InvalidHyperparam { family: Family, message: String },
    #[error("bagging needs at least two members with equal feature counts")]
    MemberMismatch,
    #[error("unknown model family `{0}`")]
    UnknownFamily(String),
    #[error("every sampled configuration failed to train")]
    AllConfigsFailed,
    #[error("model persistence: {0}")]
    Persist(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Lr,
    Ridge,
    Lda,
    Qda,
    Nb,
    Dt,
    Rf,
    Et,
    Ada,
    Gbc,
    Knn,
    Svm,
}

impl Family {
    pub const ALL: [Family; 12] = [
        Family::Lr,
        Family::Ridge,
        Family::Lda,
        Family::Qda,
        Family::Nb,
        Family::Dt,
        Family::Rf,
        Family::Et,
        Family::Ada,
        Family::Gbc,
        Family::Knn,
        Family::Svm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Lr => "lr",
            Family::Ridge => "ridge",
            Family::Lda => "lda",
            Family::Qda => "qda",
            Family::Nb => "nb",
            Family::Dt => "dt",
            Family::Rf => "rf",
            Family::Et => "et",
            Family::Ada => "ada",
            Family::Gbc => "gbc",
            Family::Knn => "knn",
            Family::Svm => "svm",
        }
    }

    /// Families fitted on z-scored features.
    pub fn scale_sensitive(self) -> bool {
        matches!(
            self,
            Family::Lr | Family::Ridge | Family::Svm | Family::Knn | Family::Lda | Family::Qda | Family::Nb
        )
    }

    pub(crate) fn schema(self) -> &'static [ParamDef] {
        use ParamKind::*;
        const DEPTH: ParamDef = ParamDef { name: "max_depth", kind: Int, min: 0.0, max: 64.0, default: 32.0 };
        const LEAF: ParamDef = ParamDef { name: "min_leaf", kind: Int, min: 1.0, max: 1e6, default: 1.0 };
        const FEATS: ParamDef = ParamDef { name: "max_features", kind: Int, min: 0.0, max: 1e6, default: 0.0 };
        const TREES: ParamDef = ParamDef { name: "n_trees", kind: Int, min: 1.0, max: 5000.0, default: 100.0 };
        match self {
            Family::Lr | Family::Svm => {
                &[ParamDef { name: "l2", kind: Real, min: 1e-12, max: 1e6, default: 1.0 }]
            }
            Family::Ridge => &[ParamDef { name: "alpha", kind: Real, min: 0.0, max: 1e6, default: 1.0 }],
            Family::Lda | Family::Qda => {
                &[ParamDef { name: "shrinkage", kind: Real, min: 0.0, max: 1.0, default: 0.0 }]
            }
            Family::Nb => {
                &[ParamDef { name: "var_smoothing", kind: Real, min: 0.0, max: 1.0, default: 1e-9 }]
            }
            Family::Dt => &[
                DEPTH,
                LEAF,
                FEATS,
                ParamDef { name: "random_splits", kind: Int, min: 0.0, max: 1.0, default: 0.0 },
            ],
            Family::Rf => &[
                TREES,
                DEPTH,
                LEAF,
                FEATS,
                ParamDef { name: "bootstrap", kind: Int, min: 0.0, max: 1.0, default: 1.0 },
            ],
            Family::Et => &[
                TREES,
                DEPTH,
                LEAF,
                FEATS,
                ParamDef { name: "bootstrap", kind: Int, min: 0.0, max: 1.0, default: 0.0 },
            ],
            Family::Ada => &[
                ParamDef { name: "n_estimators", kind: Int, min: 1.0, max: 5000.0, default: 50.0 },
                ParamDef { name: "learning_rate", kind: Real, min: 1e-6, max: 10.0, default: 1.0 },
            ],
            Family::Gbc => &[
                ParamDef { name: "n_estimators", kind: Int, min: 1.0, max: 5000.0, default: 100.0 },
                ParamDef { name: "learning_rate", kind: Real, min: 1e-6, max: 10.0, default: 0.1 },
                ParamDef { name: "max_depth", kind: Int, min: 1.0, max: 16.0, default: 3.0 },
            ],
            Family::Knn => &[ParamDef { name: "k", kind: Int, min: 1.0, max: 1e6, default: 5.0 }],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = ZooError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| ZooError::UnknownFamily(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum ParamKind {
    Int,
    Real,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ParamDef {
    pub name: &'static str,
    pub kind: ParamKind,
    pub min: f64,
    pub max: f64,
    pub default: f64,
}

pub type HyperParams = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub hyperparams: HyperParams,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        ModelSpec { family, hyperparams: HyperParams::new(), seed }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.hyperparams.insert(name.to_string(), value);
        self
    }

    pub fn validate(&self) -> Result<(), ZooError> {
        let schema = self.family.schema();
        for (name, &value) in &self.hyperparams {
            let def = schema.iter().find(|d| d.name == name).ok_or_else(|| ZooError::InvalidHyperparam {
                family: self.family,
                message: format!("unknown parameter `{name}`"),
            })?;
            if !value.is_finite() || value < def.min || value > def.max {
                return Err(ZooError::InvalidHyperparam {
                    family: self.family,
                    message: format!("`{name}` = {value} outside [{}, {}]", def.min, def.max),
                });
            }
            if def.kind == ParamKind::Int && value.fract() != 0.0 {
                return Err(ZooError::InvalidHyperparam {
                    family: self.family,
                    message: format!("`{name}` must be an integer, got {value}"),
                });
            }
        }
        Ok(())
    }

    /// Value of `name`, falling back to the schema default.
    pub fn param(&self, name: &str) -> f64 {
        self.hyperparams.get(name).copied().unwrap_or_else(|| {
            self.family
                .schema()
                .iter()
                .find(|d| d.name == name)
                .map(|d| d.default)
                .unwrap_or_else(|| panic!("{} has no parameter `{name}`", self.family))
        })
    }

    pub(crate) fn int(&self, name: &str) -> usize {
        self.param(name) as usize
    }
}

/// Non-fatal events recorded while fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Diagnostic {
    NonConvergence { iterations: usize, gradient_norm: f64 },
    RepairedShrinkage { ridge: f64 },
}

/// Anything that produces class probabilities for a fixed feature count.
pub trait Classifier: Send + Sync {
    fn n_features(&self) -> usize;

    /// Probability of class 1 per row. Callers guarantee the column count.
    fn positive_unchecked(&self, x: ArrayView2<'_, f64>) -> Vec<f64>;

    fn predict_positive(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>, ZooError> {
        if x.ncols() != self.n_features() {
            return Err(ZooError::DimensionMismatch { expected: self.n_features(), got: x.ncols() });
        }
        Ok(self.positive_unchecked(x))
    }

    /// N×2 matrix of `[P(y=0), P(y=1)]` rows.
    fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, ZooError> {
        let p1 = self.predict_positive(x)?;
        let mut out = Array2::zeros((p1.len(), 2));
        for (i, p) in p1.into_iter().enumerate() {
            out[[i, 0]] = 1.0 - p;
            out[[i, 1]] = p;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub(crate) enum Fitted {
    Linear(linear::LinearModel),
    Qda(discriminant::Qda),
    NaiveBayes(discriminant::GaussianNb),
    Tree(tree::Tree),
    Forest(forest::Forest),
    Ada(boost::AdaBoost),
    Gbc(boost::GradientBoosting),
    Knn(knn::Knn),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub feature_count: usize,
    pub class_prior: f64,
    pub diagnostics: Vec<Diagnostic>,
    scaler: Option<Standardizer>,
    state: Fitted,
}

impl TrainedModel {
    pub fn repaired(&self) -> bool {
        self.diagnostics.iter().any(|d| matches!(d, Diagnostic::RepairedShrinkage { .. }))
    }

    pub fn converged(&self) -> bool {
        !self.diagnostics.iter().any(|d| matches!(d, Diagnostic::NonConvergence { .. }))
    }
}

impl Classifier for TrainedModel {
    fn n_features(&self) -> usize {
        self.feature_count
    }

    fn positive_unchecked(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let scaled;
        let x = match &self.scaler {
            Some(s) => {
                scaled = s.transform(x);
                scaled.view()
            }
            None => x,
        };
        let p = match &self.state {
            Fitted::Linear(m) => m.predict(x),
            Fitted::Qda(m) => m.predict(x),
            Fitted::NaiveBayes(m) => m.predict(x),
            Fitted::Tree(t) => t.predict(x),
            Fitted::Forest(m) => m.predict(x),
            Fitted::Ada(m) => m.predict(x),
            Fitted::Gbc(m) => m.predict(x),
            Fitted::Knn(m) => m.predict(x),
        };
        p.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()
    }
}

/// Fits `spec` on `x`/`y`.
pub fn train(spec: &ModelSpec, x: ArrayView2<'_, f64>, y: &[u8]) -> Result<TrainedModel, ZooError> {
    if x.nrows() != y.len() {
        return Err(ZooError::LabelMismatch { rows: x.nrows(), labels: y.len() });
    }
    let n_pos = y.iter().filter(|&&v| v == 1).count();
    if n_pos == 0 || n_pos == y.len() {
        return Err(ZooError::SingleClass);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ZooError::NonFinite);
    }
    spec.validate()?;
    let class_prior = n_pos as f64 / y.len() as f64;

    let scaler = spec.family.scale_sensitive().then(|| Standardizer::fit(x));
    let scaled;
    let xs = match &scaler {
        Some(s) => {
            scaled = s.transform(x);
            scaled.view()
        }
        None => x,
    };

    let mut diagnostics = Vec::new();
    let state = match spec.family {
        Family::Lr => Fitted::Linear(linear::fit_logistic(xs, y, spec.param("l2"), &mut diagnostics)),
        Family::Ridge => Fitted::Linear(linear::fit_ridge(xs, y, spec.param("alpha"))),
        Family::Svm => Fitted::Linear(linear::fit_svm(xs, y, spec.param("l2"), spec.seed, &mut diagnostics)),
        Family::Lda => Fitted::Linear(discriminant::fit_lda(xs, y, spec.param("shrinkage"), &mut diagnostics)?),
        Family::Qda => Fitted::Qda(discriminant::fit_qda(xs, y, spec.param("shrinkage"), &mut diagnostics)?),
        Family::Nb => Fitted::NaiveBayes(discriminant::fit_nb(xs, y, spec.param("var_smoothing"))),
        Family::Dt => Fitted::Tree(forest::fit_single_tree(xs, y, spec)),
        Family::Rf | Family::Et => Fitted::Forest(forest::fit_forest(xs, y, spec)),
        Family::Ada => Fitted::Ada(boost::fit_ada(xs, y, spec)),
        Family::Gbc => Fitted::Gbc(boost::fit_gbc(xs, y, spec)),
        Family::Knn => Fitted::Knn(knn::Knn::fit(xs, y, spec.int("k"))),
    };
    Ok(TrainedModel { spec: spec.clone(), feature_count: x.ncols(), class_prior, diagnostics, scaler, state })
}

/// `N×2` class-probability matrix.
pub fn predict_proba(m: &dyn Classifier, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, ZooError> {
    m.predict_proba(x)
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use ndarray::Array2;
    use rand::Rng;

    /// Two noisy Gaussian blobs with a linear boundary along the first
    /// `informative` coordinates.
    pub fn blobs(n: usize, k: usize, informative: usize, seed: u64) -> (Array2<f64>, Vec<u8>) {
        let mut rng = crate::rng::seeded(seed);
        let mut x = Array2::zeros((n, k));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let mut score = 0.0;
            for j in 0..k {
                let v: f64 = rng.random::<f64>() * 4.0 - 2.0;
                x[[i, j]] = v;
                if j < informative {
                    score += v;
                }
            }
            let noise: f64 = rng.random::<f64>() - 0.5;
            y.push(u8::from(score + noise > 0.0));
        }
        (x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::blobs;
    use super::*;
    use ndarray::array;

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
        assert!("gp".parse::<Family>().is_err());
    }

    #[test]
    fn hyperparams_validated() {
        let bad = ModelSpec::new(Family::Dt, 0).with("max_depth", 2.5);
        assert!(matches!(bad.validate(), Err(ZooError::InvalidHyperparam { .. })));
        let bad = ModelSpec::new(Family::Knn, 0).with("gamma", 1.0);
        assert!(matches!(bad.validate(), Err(ZooError::InvalidHyperparam { .. })));
        let ok = ModelSpec::new(Family::Rf, 0).with("n_trees", 50.0).with("max_depth", 4.0);
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn every_family_yields_valid_probabilities() {
        let (x, y) = blobs(120, 4, 2, 3);
        for f in Family::ALL {
            let m = train(&ModelSpec::new(f, 1), x.view(), &y).unwrap();
            let p = m.predict_proba(x.view()).unwrap();
            for row in p.rows() {
                assert!((0.0..=1.0).contains(&row[1]), "{f}");
                assert!((row[0] + row[1] - 1.0).abs() <= 1e-9, "{f}");
            }
            let again = train(&ModelSpec::new(f, 1), x.view(), &y).unwrap();
            assert_eq!(m.predict_positive(x.view()).unwrap(), again.predict_positive(x.view()).unwrap(), "{f}");
        }
    }

    #[test]
    fn every_family_learns_blobs() {
        let (x, y) = blobs(400, 3, 2, 5);
        let (xt, yt) = blobs(400, 3, 2, 6);
        for f in Family::ALL {
            let m = train(&ModelSpec::new(f, 1), x.view(), &y).unwrap();
            let p = m.predict_positive(xt.view()).unwrap();
            let acc = crate::metrics::score_probabilities(&yt, &p).unwrap().acc;
            assert!(acc > 0.8, "{f} accuracy {acc}");
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let (x, y) = blobs(40, 3, 2, 1);
        let m = train(&ModelSpec::new(Family::Lr, 0), x.view(), &y).unwrap();
        let wrong = Array2::zeros((2, 4));
        assert_eq!(
            m.predict_positive(wrong.view()),
            Err(ZooError::DimensionMismatch { expected: 3, got: 4 })
        );
    }

    #[test]
    fn lr_separates_two_points() {
        let x = array![[-1.0], [1.0]];
        let y = [0u8, 1];
        let m = train(&ModelSpec::new(Family::Lr, 0).with("l2", 1e-4), x.view(), &y).unwrap();
        let p = m.predict_positive(x.view()).unwrap();
        assert!(p[0] < 0.5 && p[1] > 0.5);
    }

    #[test]
    fn depth_zero_tree_predicts_prior() {
        let (x, y) = blobs(50, 2, 1, 9);
        let prior = y.iter().filter(|&&v| v == 1).count() as f64 / 50.0;
        let m = train(&ModelSpec::new(Family::Dt, 0).with("max_depth", 0.0), x.view(), &y).unwrap();
        for p in m.predict_positive(x.view()).unwrap() {
            assert!((p - prior).abs() < 1e-12);
        }
    }

    #[test]
    fn knn_one_neighbour_recovers_training_label() {
        let (x, y) = blobs(60, 3, 2, 2);
        let m = train(&ModelSpec::new(Family::Knn, 0).with("k", 1.0), x.view(), &y).unwrap();
        let p = m.predict_positive(x.view()).unwrap();
        for (pi, yi) in p.iter().zip(&y) {
            assert_eq!(*pi, f64::from(*yi));
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = array![[0.0], [1.0]];
        assert_eq!(train(&ModelSpec::new(Family::Lr, 0), x.view(), &[1, 1]).unwrap_err(), ZooError::SingleClass);
    }

    #[test]
    fn single_tree_forests_reduce_to_dt() {
        let (x, y) = blobs(150, 5, 3, 4);
        let k = 5.0;
        let dt = train(&ModelSpec::new(Family::Dt, 77).with("max_depth", 6.0), x.view(), &y).unwrap();
        let rf = ModelSpec::new(Family::Rf, 77)
            .with("n_trees", 1.0)
            .with("max_depth", 6.0)
            .with("bootstrap", 0.0)
            .with("max_features", k);
        let rf = train(&rf, x.view(), &y).unwrap();
        assert_eq!(dt.predict_positive(x.view()).unwrap(), rf.predict_positive(x.view()).unwrap());

        let dt_rand = ModelSpec::new(Family::Dt, 77).with("max_depth", 6.0).with("random_splits", 1.0);
        let dt_rand = train(&dt_rand, x.view(), &y).unwrap();
        let et = ModelSpec::new(Family::Et, 77).with("n_trees", 1.0).with("max_depth", 6.0).with("max_features", k);
        let et = train(&et, x.view(), &y).unwrap();
        assert_eq!(dt_rand.predict_positive(x.view()).unwrap(), et.predict_positive(x.view()).unwrap());
    }
}
