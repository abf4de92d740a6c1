use std::collections::BTreeMap;

use super::MeanEstimates;
use crate::error::{Error, Result};
use crate::model::{ArmId, ObservationBatch, RewardVector};
use crate::scalar::Scalar;

/// Coordinate-wise average of every observation of each active arm.
pub fn estimate_sample_mean<T: Scalar>(
    batch: &ObservationBatch<T>,
    active: &[ArmId],
) -> Result<MeanEstimates<T>> {
    let mut grouped: BTreeMap<ArmId, Vec<&RewardVector<T>>> =
        active.iter().map(|&a| (a, Vec::new())).collect();
    for obs in batch.iter() {
        if let Some(v) = grouped.get_mut(&obs.arm) {
            v.push(&obs.reward);
        }
    }
    let mut out = Vec::with_capacity(grouped.len());
    for (arm, samples) in grouped {
        let mean = RewardVector::mean(samples.iter().copied())
            .ok_or_else(|| Error::Estimation(format!("active arm {arm} has no observations")))?;
        out.push((arm, mean));
    }
    Ok(MeanEstimates::from_pairs(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Observation;

    fn obs(arm: usize, r: [f64; 2]) -> Observation<f64> {
        Observation {
            arm: ArmId(arm),
            feature: vec![],
            reward: RewardVector::new(r.to_vec()).unwrap(),
            round: 1,
        }
    }

    #[test]
    fn averages_per_arm() {
        let batch: ObservationBatch<f64> =
            [obs(0, [0.2, 0.6]), obs(1, [1.0, 1.0]), obs(0, [0.4, 0.8])]
                .into_iter()
                .collect();
        let est = estimate_sample_mean(&batch, &[ArmId(0), ArmId(1)]).unwrap();
        let a = est.get(ArmId(0)).unwrap();
        assert!((a[0] - 0.3).abs() < 1e-15 && (a[1] - 0.7).abs() < 1e-15);
        assert_eq!(est.get(ArmId(1)).unwrap().values(), &[1.0, 1.0]);
    }

    #[test]
    fn inactive_arms_are_ignored() {
        let batch: ObservationBatch<f64> = [obs(0, [0.2, 0.6]), obs(3, [9.0, 9.0])]
            .into_iter()
            .collect();
        let est = estimate_sample_mean(&batch, &[ArmId(0)]).unwrap();
        assert_eq!(est.arms(), vec![ArmId(0)]);
        assert_eq!(est.get(ArmId(0)).unwrap().values(), &[0.2, 0.6]);
    }

    #[test]
    fn unobserved_arm_is_an_error() {
        let batch: ObservationBatch<f64> = [obs(0, [0.2, 0.6])].into_iter().collect();
        let err = estimate_sample_mean(&batch, &[ArmId(0), ArmId(2)]).unwrap_err();
        assert!(matches!(err, Error::Estimation(ref m) if m.contains("arm 2")));
    }
}
