//! Mean-probability combination of already-trained models.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{Classifier, TrainedModel, ZooError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggingEnsemble {
    pub members: Vec<TrainedModel>,
}

/// Combines at least two members that agree on the feature count.
pub fn bag(members: Vec<TrainedModel>) -> Result<BaggingEnsemble, ZooError> {
    if members.len() < 2 || members.iter().any(|m| m.feature_count != members[0].feature_count) {
        return Err(ZooError::MemberMismatch);
    }
    Ok(BaggingEnsemble { members })
}

impl Classifier for BaggingEnsemble {
    fn n_features(&self) -> usize {
        self.members[0].feature_count
    }

    fn positive_unchecked(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut acc = vec![0.0; x.nrows()];
        for m in &self.members {
            for (a, p) in acc.iter_mut().zip(m.positive_unchecked(x)) {
                *a += p;
            }
        }
        let m = self.members.len() as f64;
        acc.into_iter().map(|v| v / m).collect()
    }
}
