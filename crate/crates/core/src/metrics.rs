//! Hypervolume, soft constrained reward and Pareto-set recovery.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::ArmId;
use crate::scalar::Scalar;

/// One scored quantity of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub run_id: String,
    pub seed: u64,
    pub algorithm: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub b: usize,
    pub metric: String,
    pub value: f64,
    #[serde(skip)]
    pub normalizer: Option<f64>,
}

/// Lebesgue measure of the union of boxes `[reference, p]`, for m ∈ {2, 3}.
/// Coordinates below the reference are clipped to it.
pub fn hypervolume<T: Scalar, V: AsRef<[T]>>(points: &[V], reference: &[T]) -> Result<T> {
    let m = reference.len();
    if !(2..=3).contains(&m) {
        return Err(Error::UnsupportedDimension(format!(
            "hypervolume supports 2 or 3 objectives, got {m}"
        )));
    }
    let mut shifted = Vec::with_capacity(points.len());
    for p in points {
        let p = p.as_ref();
        if p.len() != m {
            return Err(Error::Metric(format!(
                "point of dimension {} against a {m}-dimensional reference",
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Metric("non-finite point".into()));
        }
        let q: Vec<T> = p
            .iter()
            .zip(reference)
            .map(|(&v, &r)| (v - r).max(T::zero()))
            .collect();
        if q.iter().all(|&v| v > T::zero()) {
            shifted.push(q);
        }
    }
    Ok(if m == 2 {
        let mut pts: Vec<(T, T)> = shifted.iter().map(|q| (q[0], q[1])).collect();
        area(&mut pts)
    } else {
        volume(shifted)
    })
}

/// Area dominated by positive points above the origin, by descending-x sweep.
fn area<T: Scalar>(pts: &mut [(T, T)]) -> T {
    pts.sort_by(|a, b| desc(a.0, b.0).then(desc(a.1, b.1)));
    let mut total = T::zero();
    let mut y_max = T::zero();
    for &(x, y) in pts.iter() {
        if y > y_max {
            total += x * (y - y_max);
            y_max = y;
        }
    }
    total
}

/// Slices along the third axis from the top down.
fn volume<T: Scalar>(mut pts: Vec<Vec<T>>) -> T {
    pts.sort_by(|a, b| desc(a[2], b[2]));
    let mut total = T::zero();
    let mut slice: Vec<(T, T)> = Vec::with_capacity(pts.len());
    for i in 0..pts.len() {
        slice.push((pts[i][0], pts[i][1]));
        let below = pts.get(i + 1).map_or(T::zero(), |p| p[2]);
        let height = pts[i][2] - below;
        if height > T::zero() {
            total += height * area(&mut slice);
        }
    }
    total
}

fn desc<T: Scalar>(a: T, b: T) -> Ordering {
    b.partial_cmp(&a).expect("finite values")
}

/// Primary objective of the selection when its constraint score reaches
/// 0.9·τ, else 0; normalized by `μ₁(x*)` when given.
pub fn soft_constrained_reward<T: Scalar>(
    mu_selected: &[T],
    tau: T,
    mu1_star: Option<T>,
) -> Result<(T, Option<T>)> {
    if mu_selected.len() < 2 {
        return Err(Error::Metric(
            "soft constrained reward needs two objectives".into(),
        ));
    }
    if tau <= T::zero() {
        return Err(Error::Metric(format!("tau must be positive, got {tau}")));
    }
    let raw = if mu_selected[1] >= T::lit(0.9) * tau {
        mu_selected[0]
    } else {
        T::zero()
    };
    let normalized = match mu1_star {
        Some(s) if s <= T::zero() => {
            return Err(Error::Metric(format!("cannot normalize by μ₁(x*) = {s}")))
        }
        Some(s) => Some(raw / s),
        None => None,
    };
    Ok((raw, normalized))
}

/// `100 · HV(estimated) / HV(true front)`, both scored at the true means.
pub fn hv_recovery<T: Scalar>(
    estimated: &[ArmId],
    true_front: &[ArmId],
    true_means: &Matrix<T>,
    reference: &[T],
) -> Result<T> {
    let rows = |set: &[ArmId]| -> Result<Vec<&[T]>> {
        set.iter()
            .map(|a| {
                (a.index() < true_means.nrows())
                    .then(|| true_means.row(a.index()))
                    .ok_or_else(|| Error::Metric(format!("arm {a} is not in the instance")))
            })
            .collect()
    };
    let truth = hypervolume(&rows(true_front)?, reference)?;
    if truth <= T::zero() {
        return Err(Error::Metric(
            "true Pareto front has zero hypervolume".into(),
        ));
    }
    Ok(T::lit(100.0) * hypervolume(&rows(estimated)?, reference)? / truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staircase_and_single_box() {
        let pts: [[f64; 2]; 3] = [[0.8, 0.2], [0.5, 0.5], [0.2, 0.8]];
        assert!((hypervolume(&pts, &[0.0, 0.0]).unwrap() - 0.37).abs() < 1e-15);
        assert_eq!(hypervolume(&[[0.5, 0.5]], &[0.0, 0.0]).unwrap(), 0.25);
        let more: [[f64; 2]; 4] = [[0.8, 0.2], [0.5, 0.5], [0.2, 0.8], [0.4, 0.4]];
        assert!((hypervolume(&more, &[0.0, 0.0]).unwrap() - 0.37).abs() < 1e-15);
    }

    #[test]
    fn clipping_and_empty() {
        assert_eq!(hypervolume(&[[-1.0, 2.0]], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(hypervolume::<f64, [f64; 2]>(&[], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(hypervolume(&[[3.0, 2.0]], &[1.0, 1.0]).unwrap(), 2.0);
    }

    #[test]
    fn three_dimensional_boxes() {
        assert_eq!(hypervolume(&[[1.0, 1.0, 1.0]], &[0.0; 3]).unwrap(), 1.0);
        // Two unit-overlapping boxes: 2 + 2 − 1.
        let v = hypervolume(&[[2.0, 1.0, 1.0], [1.0, 2.0, 1.0]], &[0.0; 3]).unwrap();
        assert_eq!(v, 3.0);
        let v = hypervolume(&[[1.0, 1.0, 2.0], [2.0, 2.0, 1.0]], &[0.0; 3]).unwrap();
        assert_eq!(v, 5.0);
    }

    #[test]
    fn four_objectives_unsupported() {
        let err = hypervolume(&[[1.0; 4]], &[0.0; 4]).unwrap_err();
        assert!(matches!(err, Error::UnsupportedDimension(_)));
    }

    #[test]
    fn soft_reward() {
        assert_eq!(
            soft_constrained_reward(&[0.7, 0.46], 0.5, None).unwrap(),
            (0.7, None)
        );
        assert_eq!(
            soft_constrained_reward(&[0.7, 0.44], 0.5, None).unwrap().0,
            0.0
        );
        let (_, n) = soft_constrained_reward(&[0.7, 0.46], 0.5, Some(0.8f64)).unwrap();
        assert!((n.unwrap() - 0.875).abs() < 1e-15);
        assert!(soft_constrained_reward(&[0.7, 0.46], 0.5, Some(0.0)).is_err());
    }

    #[test]
    fn recovery() {
        let means =
            Matrix::<f64>::from_rows(&[[0.8, 0.2], [0.5, 0.5], [0.2, 0.8], [0.4, 0.4]]).unwrap();
        let front = [ArmId(0), ArmId(1), ArmId(2)];
        assert_eq!(
            hv_recovery(&front, &front, &means, &[0.0, 0.0]).unwrap(),
            100.0
        );
        // {A, C, D}: 0.8·0.2 + 0.4·0.2 + 0.2·0.4 = 0.32.
        let est = [ArmId(0), ArmId(2), ArmId(3)];
        let r = hv_recovery(&est, &front, &means, &[0.0, 0.0]).unwrap();
        assert!((r - 100.0 * 0.32 / 0.37).abs() < 1e-12);
        let zero = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
        assert!(hv_recovery(&[ArmId(0)], &[ArmId(0)], &zero, &[0.0, 0.0]).is_err());
    }
}
