//! Mean-reward estimators: sample means, least squares on the current
//! round, and a one-hidden-layer ReLU network.

mod linear;
mod mean;
mod mlp;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{ArmId, RewardVector};
use crate::scalar::Scalar;

pub use linear::{fit_linear, predict_linear, LinearFit};
pub use mean::estimate_sample_mean;
pub use mlp::{mlp_fit, mlp_loss_grad, mlp_predict, MlpConfig, MlpDataScope, MlpFit, MlpParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Mean,
    Linear,
    Mlp,
}

/// `μ̂(x)` for each active arm.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanEstimates<T> {
    values: BTreeMap<ArmId, RewardVector<T>>,
}

impl<T: Scalar> MeanEstimates<T> {
    pub fn from_pairs<I: IntoIterator<Item = (ArmId, RewardVector<T>)>>(pairs: I) -> Self {
        MeanEstimates {
            values: pairs.into_iter().collect(),
        }
    }

    pub fn get(&self, arm: ArmId) -> Option<&RewardVector<T>> {
        self.values.get(&arm)
    }

    pub fn arms(&self) -> Vec<ArmId> {
        self.values.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ArmId, &RewardVector<T>)> {
        self.values.iter().map(|(&a, v)| (a, v))
    }

    /// Estimates of `arms`, in that order. Panics on an arm without an estimate.
    pub fn rows_for(&self, arms: &[ArmId]) -> Vec<&[T]> {
        arms.iter().map(|a| self.values[a].values()).collect()
    }
}
