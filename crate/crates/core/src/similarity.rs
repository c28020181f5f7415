//! Agreement between feature-importance vectors: top-j overlap, mas-weighted
//! cosine similarity, their all-pairs group means, and the consensus vector.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shap::{Attribution, GlobalImportance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimilarityError {
    #[error("j = {j} must lie in 1..={k}")]
    BadJ { j: usize, k: usize },
    #[error("importance vectors have {expected} and {got} features")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least two models, got {0}")]
    TooFewModels(usize),
    #[error("consensus inputs come from different sample sizes")]
    SizeMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub ordered_indices: Vec<usize>,
    pub j: usize,
}

/// Indices of the `j` largest |importance| values, ties by ascending index.
pub fn rank_top_j(importance: &[f64], j: usize) -> Result<FeatureRanking, SimilarityError> {
    let k = importance.len();
    if j == 0 || j > k {
        return Err(SimilarityError::BadJ { j, k });
    }
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| importance[b].abs().total_cmp(&importance[a].abs()).then(a.cmp(&b)));
    idx.truncate(j);
    Ok(FeatureRanking { ordered_indices: idx, j })
}

fn same_len(a: &[f64], b: &[f64]) -> Result<(), SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    Ok(())
}

/// `|top_j(a) ∩ top_j(b)| / j`.
pub fn top_j_similarity(a: &[f64], b: &[f64], j: usize) -> Result<f64, SimilarityError> {
    same_len(a, b)?;
    let ra = rank_top_j(a, j)?.ordered_indices;
    let rb = rank_top_j(b, j)?.ordered_indices;
    Ok(ra.iter().filter(|i| rb.contains(i)).count() as f64 / j as f64)
}

fn all_pairs<V: AsRef<[f64]>>(
    models: &[V],
    mut f: impl FnMut(usize, usize) -> Result<f64, SimilarityError>,
) -> Result<f64, SimilarityError> {
    let m = models.len();
    if m < 2 {
        return Err(SimilarityError::TooFewModels(m));
    }
    let mut total = 0.0;
    for a in 0..m {
        for b in a + 1..m {
            total += f(a, b)?;
        }
    }
    Ok(total / (m * (m - 1) / 2) as f64)
}

/// Mean top-j similarity over all unordered model pairs.
pub fn top_j_pairwise<V: AsRef<[f64]>>(models: &[V], j: usize) -> Result<f64, SimilarityError> {
    all_pairs(models, |a, b| top_j_similarity(models[a].as_ref(), models[b].as_ref(), j))
}

/// Top-j overlap computed per explained instance (rows of |φ|) and averaged.
pub fn top_j_per_instance(a: &Attribution, b: &Attribution, j: usize) -> Result<f64, SimilarityError> {
    if a.values.dim() != b.values.dim() {
        return Err(SimilarityError::DimensionMismatch { expected: a.values.ncols(), got: b.values.ncols() });
    }
    let n = a.values.nrows();
    let mut total = 0.0;
    for (ra, rb) in a.values.rows().into_iter().zip(b.values.rows()) {
        total += top_j_similarity(&ra.to_vec(), &rb.to_vec(), j)?;
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

/// How the per-feature weight `mas_k` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MasMode {
    /// Mean |importance| of feature k across the compared models.
    #[default]
    Group,
    /// One scalar: mean |importance| over every feature and model.
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedImportance {
    pub weights: Vec<f64>,
}

pub fn mas<V: AsRef<[f64]>>(models: &[V], mode: MasMode) -> Result<Vec<f64>, SimilarityError> {
    let k = models.first().map_or(0, |m| m.as_ref().len());
    for m in models {
        same_len(&vec![0.0; k], m.as_ref())?;
    }
    let n = models.len().max(1) as f64;
    let group: Vec<f64> =
        (0..k).map(|f| models.iter().map(|m| m.as_ref()[f].abs()).sum::<f64>() / n).collect();
    Ok(match mode {
        MasMode::Group => group,
        MasMode::Scalar => {
            let s = group.iter().sum::<f64>() / k.max(1) as f64;
            vec![s; k]
        }
    })
}

/// `w_{f,k} = |importance_{f,k}| · mas_k` for every model of the group.
pub fn weight_vectors<V: AsRef<[f64]>>(models: &[V], mode: MasMode) -> Result<Vec<WeightedImportance>, SimilarityError> {
    let mas = mas(models, mode)?;
    Ok(models
        .iter()
        .map(|m| WeightedImportance { weights: m.as_ref().iter().zip(&mas).map(|(v, w)| v.abs() * w).collect() })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cosine {
    pub value: f64,
    /// Set when either vector has zero norm (value reported as 0).
    pub degenerate: bool,
}

/// Cosine similarity of two non-negative weight vectors.
pub fn wcossim(a: &[f64], b: &[f64]) -> Result<Cosine, SimilarityError> {
    same_len(a, b)?;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(Cosine { value: 0.0, degenerate: true });
    }
    Ok(Cosine { value: (dot / (na * nb)).clamp(0.0, 1.0), degenerate: false })
}

/// Mean weighted cosine over all pairs, with weights formed over the group.
pub fn wcossim_group<V: AsRef<[f64]>>(models: &[V], mode: MasMode) -> Result<f64, SimilarityError> {
    if models.len() < 2 {
        return Err(SimilarityError::TooFewModels(models.len()));
    }
    let w = weight_vectors(models, mode)?;
    all_pairs(models, |a, b| Ok(wcossim(&w[a].weights, &w[b].weights)?.value))
}

/// Mean weighted cosine of member `i` against every other member, with
/// weights formed over the whole group.
pub fn wcossim_to_others<V: AsRef<[f64]>>(models: &[V], i: usize, mode: MasMode) -> Result<f64, SimilarityError> {
    if models.len() < 2 {
        return Err(SimilarityError::TooFewModels(models.len()));
    }
    let w = weight_vectors(models, mode)?;
    let mut total = 0.0;
    for (j, other) in w.iter().enumerate() {
        if j != i {
            total += wcossim(&w[i].weights, &other.weights)?.value;
        }
    }
    Ok(total / (models.len() - 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusVector {
    pub per_feature: Vec<f64>,
    pub models: usize,
    pub size: usize,
}

/// Mean of the models' global importance vectors, all taken at one size.
pub fn consensus(models: &[GlobalImportance]) -> Result<ConsensusVector, SimilarityError> {
    let first = models.first().ok_or(SimilarityError::TooFewModels(0))?;
    if models.iter().any(|m| m.size != first.size) {
        return Err(SimilarityError::SizeMismatch);
    }
    let vecs: Vec<&[f64]> = models.iter().map(|m| m.per_feature.as_slice()).collect();
    let per_feature = mas(&vecs, MasMode::Group)?;
    Ok(ConsensusVector { per_feature, models: models.len(), size: first.size })
}

/// Mean |φ| over every instance of every attribution matrix.
pub fn consensus_from_attributions(attributions: &[Attribution]) -> Result<Vec<f64>, SimilarityError> {
    let first = attributions.first().ok_or(SimilarityError::TooFewModels(0))?;
    let k = first.values.ncols();
    let mut total = vec![0.0; k];
    let mut n = 0usize;
    for a in attributions {
        if a.values.ncols() != k {
            return Err(SimilarityError::DimensionMismatch { expected: k, got: a.values.ncols() });
        }
        for row in a.values.rows() {
            for (t, v) in total.iter_mut().zip(row) {
                *t += v.abs();
            }
            n += 1;
        }
    }
    Ok(total.into_iter().map(|t| t / n.max(1) as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn ranking_examples() {
        let v = [0.5, 0.3, 0.1, 0.05];
        assert_eq!(rank_top_j(&v, 2).unwrap().ordered_indices, vec![0, 1]);
        assert_eq!(rank_top_j(&[0.2; 4], 2).unwrap().ordered_indices, vec![0, 1]);
        assert_eq!(rank_top_j(&v, 4).unwrap().ordered_indices, vec![0, 1, 2, 3]);
        assert_eq!(rank_top_j(&v, 0), Err(SimilarityError::BadJ { j: 0, k: 4 }));
        assert_eq!(rank_top_j(&v, 5), Err(SimilarityError::BadJ { j: 5, k: 4 }));
    }

    #[test]
    fn top_j_examples() {
        let a = [0.5, 0.3, 0.1, 0.05];
        for j in 1..=4 {
            assert_eq!(top_j_similarity(&a, &a, j).unwrap(), 1.0);
        }
        assert_eq!(top_j_similarity(&a, &[0.1, 0.2, 0.5, 0.4], 2).unwrap(), 0.0);
        assert_eq!(top_j_similarity(&a, &[0.4, 0.35, 0.2, 0.01], 2).unwrap(), 1.0);
        assert!(matches!(top_j_similarity(&a, &[0.1], 1), Err(SimilarityError::DimensionMismatch { .. })));
    }

    #[test]
    fn pairwise_mean() {
        // pairs (0,1)=1, (0,2)=0.5, (1,2)=0.5 at j=2
        let m = [vec![0.9, 0.8, 0.1, 0.0], vec![0.8, 0.9, 0.0, 0.1], vec![0.9, 0.0, 0.8, 0.1]];
        assert_abs_diff_eq!(top_j_pairwise(&m, 2).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(top_j_pairwise(&m[..1], 2), Err(SimilarityError::TooFewModels(1)));
    }

    #[test]
    fn weight_examples() {
        let w = weight_vectors(&[vec![0.3, 0.5]], MasMode::Group).unwrap();
        assert_eq!(w[0].weights, vec![0.09, 0.25]);
        let w = weight_vectors(&[vec![1.0, 0.0], vec![0.0, 1.0]], MasMode::Group).unwrap();
        assert_eq!(w[0].weights, vec![0.5, 0.0]);
        assert_eq!(w[1].weights, vec![0.0, 0.5]);
    }

    #[test]
    fn cosine_examples() {
        assert_abs_diff_eq!(wcossim(&[3.0, 4.0, 0.0], &[4.0, 3.0, 0.0]).unwrap().value, 0.96, epsilon = 1e-15);
        assert_eq!(wcossim(&[1.0, 0.0], &[0.0, 2.0]).unwrap().value, 0.0);
        assert_eq!(wcossim(&[0.0, 0.0], &[0.0, 2.0]).unwrap(), Cosine { value: 0.0, degenerate: true });
        let ortho = [vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(wcossim_group(&ortho, MasMode::Group).unwrap(), 0.0);
        let same = [vec![0.2, 0.4], vec![0.2, 0.4]];
        assert_abs_diff_eq!(wcossim_group(&same, MasMode::Group).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn consensus_examples() {
        let g = |v: Vec<f64>| GlobalImportance::new(v).tagged("m", 64, 0);
        let c = consensus(&[g(vec![0.2, 0.0]), g(vec![0.0, 0.2])]).unwrap();
        assert_eq!(c.per_feature, vec![0.1, 0.1]);
        let mut other = g(vec![0.1, 0.1]);
        other.size = 32;
        assert_eq!(consensus(&[g(vec![0.2, 0.0]), other]), Err(SimilarityError::SizeMismatch));
    }

    proptest! {
        #[test]
        fn cosine_properties(
            a in proptest::collection::vec(0.0f64..1.0, 6),
            b in proptest::collection::vec(0.0f64..1.0, 6),
            alpha in 0.01f64..100.0,
        ) {
            let ab = wcossim(&a, &b).unwrap().value;
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - wcossim(&b, &a).unwrap().value).abs() < 1e-15);
            let scaled: Vec<f64> = a.iter().map(|v| v * alpha).collect();
            prop_assert!((ab - wcossim(&scaled, &b).unwrap().value).abs() < 1e-12);
            prop_assert_eq!(rank_top_j(&scaled, 3).unwrap(), rank_top_j(&a, 3).unwrap());
        }

        #[test]
        fn group_metrics_ignore_model_order(
            m in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 5), 3..5),
        ) {
            let mut rev = m.clone();
            rev.reverse();
            prop_assert!((wcossim_group(&m, MasMode::Group).unwrap() - wcossim_group(&rev, MasMode::Group).unwrap()).abs() < 1e-12);
            prop_assert!((top_j_pairwise(&m, 2).unwrap() - top_j_pairwise(&rev, 2).unwrap()).abs() < 1e-12);
            let t = top_j_similarity(&m[0], &m[1], 2).unwrap();
            prop_assert!(t == 0.0 || t == 0.5 || t == 1.0);
        }
    }
}
