//! Dominance, Pareto fronts and gap computations.
//!
//! Every function here works on plain mean vectors, so the same code gives
//! the true gaps (fed with instance means) and the empirical gaps used for
//! elimination (fed with estimates). Ties in any argmax/argmin break
//! towards the lowest arm index.

use std::cmp::Ordering;
use std::fmt;

use serde::ser::Serializer;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::ArmId;
use crate::scalar::Scalar;

/// A gap value; `Unbounded` compares greater than every finite gap.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum Gap<T> {
    Finite(T),
    Unbounded,
}

impl<T: Scalar> Gap<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            Gap::Finite(v) => Some(v),
            Gap::Unbounded => None,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, Gap::Unbounded)
    }

    pub fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn cmp_total(&self, other: &Self) -> Ordering {
        self.partial_cmp(other).unwrap_or(Ordering::Equal)
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Gap::Finite(v) => v.as_f64(),
            Gap::Unbounded => f64::INFINITY,
        }
    }
}

impl<T: Scalar> fmt::Display for Gap<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gap::Finite(v) => write!(f, "{v}"),
            Gap::Unbounded => f.write_str("inf"),
        }
    }
}

impl<T: Scalar> Serialize for Gap<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Gap::Finite(v) => s.serialize_f64(v.as_f64()),
            Gap::Unbounded => s.serialize_str("inf"),
        }
    }
}

/// `u` Pareto-dominates `v`: `u ≥ v` everywhere and `u > v` somewhere.
pub fn dominates<T: Scalar>(u: &[T], v: &[T]) -> bool {
    let mut strict = false;
    for (&a, &b) in u.iter().zip(v) {
        if a < b {
            return false;
        }
        if a > b {
            strict = true;
        }
    }
    strict
}

/// `m(x, y) = min_i (μ_i(y) − μ_i(x))`: how far `y` dominates `x`.
pub fn dominance_margin<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| b - a)
        .fold(T::infinity(), T::min)
}

/// `M(x, y) = max_i (μ_i(x) − μ_i(y))`.
pub fn max_advantage<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| a - b)
        .fold(T::neg_infinity(), T::max)
}

/// Positions of the non-dominated points, ascending.
pub fn front_positions<T: Scalar, V: AsRef<[T]>>(points: &[V]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !points
                .iter()
                .enumerate()
                .any(|(j, p)| j != i && dominates(p.as_ref(), points[i].as_ref()))
        })
        .collect()
}

/// Non-dominated arms of a K×m mean matrix.
pub fn pareto_front<T: Scalar>(means: &Matrix<T>) -> Vec<ArmId> {
    let rows: Vec<&[T]> = means.rows_iter().collect();
    front_positions(&rows).into_iter().map(ArmId).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Pareto,
    Dominated,
    Optimal,
    Feasible,
    Infeasible,
}

/// The pieces a gap is assembled from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GapComponents<T: Scalar> {
    /// `Δ = max_{y∈front} m(x, y)`; `argmax` is the most-dominating front arm.
    Dominated { max_margin: T, argmax: ArmId },
    /// `Δ = min(δ⁺, δ⁻)` for a front arm.
    Front {
        delta_plus: Gap<T>,
        delta_minus: Gap<T>,
    },
    /// `Δ = min(δ, μ₂(x*) − τ)` with `δ = max(viol, subopt)`.
    Constrained {
        viol: T,
        subopt: T,
        delta: T,
        optimal_margin: T,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapEntry<T: Scalar> {
    pub arm: ArmId,
    pub gap: Gap<T>,
    pub class: Classification,
    pub components: GapComponents<T>,
}

impl<T: Scalar> GapEntry<T> {
    /// Recombines the components by the defining formula.
    pub fn recombined(&self) -> Gap<T> {
        match self.components {
            GapComponents::Dominated { max_margin, .. } => Gap::Finite(max_margin),
            GapComponents::Front {
                delta_plus,
                delta_minus,
            } => delta_plus.min(delta_minus),
            GapComponents::Constrained {
                delta,
                optimal_margin,
                ..
            } => Gap::Finite(delta.min(optimal_margin)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport<T: Scalar> {
    pub entries: Vec<GapEntry<T>>,
    /// Pareto front (Pareto reports) or `[x*]` (constrained reports).
    pub front: Vec<ArmId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimal: Option<ArmId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

impl<T: Scalar> GapReport<T> {
    pub fn gap(&self, arm: ArmId) -> Option<Gap<T>> {
        self.entries.iter().find(|e| e.arm == arm).map(|e| e.gap)
    }

    pub fn entry(&self, arm: ArmId) -> Option<&GapEntry<T>> {
        self.entries.iter().find(|e| e.arm == arm)
    }
}

/// Pareto gaps of every point. `arms[i]` labels `points[i]`.
pub fn pareto_gaps_of<T: Scalar, V: AsRef<[T]>>(arms: &[ArmId], points: &[V]) -> GapReport<T> {
    let n = points.len();
    assert_eq!(arms.len(), n, "one label per point");
    let front = front_positions(points);
    let mut on_front = vec![false; n];
    front.iter().for_each(|&i| on_front[i] = true);
    let p = |i: usize| points[i].as_ref();

    // Dominated points first: δ⁻ of front points needs their gaps.
    let mut dominated_gap = vec![T::zero(); n];
    let mut entries: Vec<Option<GapEntry<T>>> = vec![None; n];
    for x in (0..n).filter(|&x| !on_front[x]) {
        let mut best = front[0];
        let mut best_val = dominance_margin(p(x), p(best));
        for &y in &front[1..] {
            let v = dominance_margin(p(x), p(y));
            if v > best_val {
                best = y;
                best_val = v;
            }
        }
        dominated_gap[x] = best_val;
        entries[x] = Some(GapEntry {
            arm: arms[x],
            gap: Gap::Finite(best_val),
            class: Classification::Dominated,
            components: GapComponents::Dominated {
                max_margin: best_val,
                argmax: arms[best],
            },
        });
    }

    for &x in &front {
        let delta_plus = front
            .iter()
            .filter(|&&y| y != x)
            .map(|&y| Gap::Finite(max_advantage(p(x), p(y)).min(max_advantage(p(y), p(x)))))
            .fold(Gap::Unbounded, Gap::min);
        let delta_minus = (0..n)
            .filter(|&y| !on_front[y])
            .map(|y| Gap::Finite(max_advantage(p(y), p(x)).max(T::zero()) + dominated_gap[y]))
            .fold(Gap::Unbounded, Gap::min);
        entries[x] = Some(GapEntry {
            arm: arms[x],
            gap: delta_plus.min(delta_minus),
            class: Classification::Pareto,
            components: GapComponents::Front {
                delta_plus,
                delta_minus,
            },
        });
    }

    GapReport {
        entries: entries
            .into_iter()
            .map(|e| e.expect("every point classified"))
            .collect(),
        front: front.into_iter().map(|i| arms[i]).collect(),
        optimal: None,
        tau: None,
    }
}

/// Pareto gaps of every arm of a K×m mean matrix.
pub fn pareto_gaps<T: Scalar>(means: &Matrix<T>) -> GapReport<T> {
    let rows: Vec<&[T]> = means.rows_iter().collect();
    let arms: Vec<ArmId> = (0..rows.len()).map(ArmId).collect();
    pareto_gaps_of(&arms, &rows)
}

/// Pareto gap of a single arm.
pub fn pareto_gap<T: Scalar>(means: &Matrix<T>, x: ArmId) -> Result<GapEntry<T>> {
    if x.0 >= means.nrows() {
        return Err(Error::Domain(format!("arm {x} out of range")));
    }
    Ok(pareto_gaps(means).entries[x.0])
}

fn require_two_objectives<T: Scalar>(means: &Matrix<T>) -> Result<()> {
    if means.ncols() != 2 {
        return Err(Error::UnsupportedDimension(format!(
            "constrained gaps need exactly 2 objectives, got {}",
            means.ncols()
        )));
    }
    Ok(())
}

/// Best feasible arm: `argmax_{μ₂ ≥ τ} μ₁`, lowest index on ties.
pub fn best_feasible<T: Scalar>(means: &Matrix<T>, tau: T) -> Result<ArmId> {
    require_two_objectives(means)?;
    let mut best: Option<usize> = None;
    for (i, row) in means.rows_iter().enumerate() {
        if row[1] >= tau && best.is_none_or(|b| row[0] > means[(b, 0)]) {
            best = Some(i);
        }
    }
    best.map(ArmId)
        .ok_or_else(|| Error::Instance(format!("no arm is feasible at threshold {tau}")))
}

/// Constrained gaps of every arm.
pub fn constrained_gaps<T: Scalar>(means: &Matrix<T>, tau: T) -> Result<GapReport<T>> {
    let star = best_feasible(means, tau)?;
    let (mu1_star, mu2_star) = (means[(star.0, 0)], means[(star.0, 1)]);
    let optimal_margin = mu2_star - tau;
    let entries = means
        .rows_iter()
        .enumerate()
        .map(|(i, row)| {
            let viol = (tau - row[1]).max(T::zero());
            let subopt = mu1_star - row[0];
            let delta = viol.max(subopt);
            let class = if i == star.0 {
                Classification::Optimal
            } else if row[1] >= tau {
                Classification::Feasible
            } else {
                Classification::Infeasible
            };
            GapEntry {
                arm: ArmId(i),
                gap: Gap::Finite(delta.min(optimal_margin)),
                class,
                components: GapComponents::Constrained {
                    viol,
                    subopt,
                    delta,
                    optimal_margin,
                },
            }
        })
        .collect();
    Ok(GapReport {
        entries,
        front: vec![star],
        optimal: Some(star),
        tau: Some(tau.as_f64()),
    })
}

pub fn constrained_gap<T: Scalar>(means: &Matrix<T>, tau: T, x: ArmId) -> Result<GapEntry<T>> {
    if x.0 >= means.nrows() {
        return Err(Error::Domain(format!("arm {x} out of range")));
    }
    Ok(constrained_gaps(means, tau)?.entries[x.0])
}

/// `H = max_{x ≠ x*} 1/Δ(x)²`.
pub fn hardness<T: Scalar>(means: &Matrix<T>, tau: T) -> Result<T> {
    if means.nrows() < 2 {
        return Err(Error::Instance("hardness needs at least two arms".into()));
    }
    let report = constrained_gaps(means, tau)?;
    let star = report.optimal.expect("constrained report names x*");
    let mut h = T::zero();
    for e in report.entries.iter().filter(|e| e.arm != star) {
        let gap = e.gap.finite().expect("constrained gaps are finite");
        if !(gap > T::zero()) {
            return Err(Error::Instance(format!(
                "arm {} has constrained gap {gap}; hardness is undefined",
                e.arm
            )));
        }
        h = h.max(T::one() / (gap * gap));
    }
    Ok(h)
}

/// Sorts arms by decreasing gap, lowest index first among equal gaps.
pub(crate) fn by_decreasing_gap<T: Scalar>(report: &GapReport<T>, arms: &mut [ArmId]) {
    arms.sort_by(|a, b| {
        let ga = report.gap(*a).unwrap_or(Gap::Finite(T::neg_infinity()));
        let gb = report.gap(*b).unwrap_or(Gap::Finite(T::neg_infinity()));
        gb.cmp_total(&ga).then(a.cmp(b))
    });
}
