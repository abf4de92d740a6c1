use super::MeanEstimates;
use crate::allocate::pseudo_inverse;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::model::{ArmId, ObservationBatch, RewardVector};
use crate::scalar::Scalar;

/// Least-squares fit on one round of data.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit<T> {
    /// d×m, one column per objective.
    pub theta_hat: Matrix<T>,
    /// `V = XᵀX`.
    pub gram: Matrix<T>,
    /// `V† = Φ(ΦᵀVΦ)⁻¹Φᵀ`.
    pub gram_pinv: Matrix<T>,
}

/// `θ̂ = V†XᵀY` from the rows of `round_batch`, with `Φ` drawn from
/// `active_features` (the features of the active arms, ascending arm index).
pub fn fit_linear<T: Scalar, V: AsRef<[T]>>(
    round_batch: &ObservationBatch<T>,
    active_features: &[V],
) -> Result<LinearFit<T>> {
    let first = round_batch
        .rows()
        .first()
        .ok_or_else(|| Error::Estimation("linear fit on an empty batch".into()))?;
    let d = first.feature.len();
    let m = first.reward.dim();
    if d == 0 {
        return Err(Error::Estimation("linear fit needs feature vectors".into()));
    }

    let mut gram = Matrix::zeros(d, d);
    let mut xty = Matrix::zeros(d, m);
    for obs in round_batch.iter() {
        if obs.feature.len() != d || obs.reward.dim() != m {
            return Err(Error::Estimation("ragged observation batch".into()));
        }
        for i in 0..d {
            let xi = obs.feature[i];
            for j in 0..d {
                gram[(i, j)] += xi * obs.feature[j];
            }
            for j in 0..m {
                xty[(i, j)] += xi * obs.reward[j];
            }
        }
    }
    let gram_pinv = pseudo_inverse(&gram, active_features)?;
    let theta_hat = gram_pinv.matmul(&xty)?;
    Ok(LinearFit {
        theta_hat,
        gram,
        gram_pinv,
    })
}

/// `μ̂(x) = θ̂ᵀφ(x)` for each `(arm, φ(arm))`.
pub fn predict_linear<T: Scalar>(
    fit: &LinearFit<T>,
    features: &[(ArmId, &[T])],
) -> MeanEstimates<T> {
    let theta_t = fit.theta_hat.transpose();
    MeanEstimates::from_pairs(features.iter().map(|&(arm, phi)| {
        let mu: Vec<T> = theta_t.rows_iter().map(|col| dot(col, phi)).collect();
        (arm, RewardVector::new_unchecked(mu))
    }))
}
