//! Per-round pull allocation: round-robin uniform pulls and the
//! G-optimal experimental design with integer rounding.

use std::collections::BTreeMap;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{greedy_basis, orthonormal_basis, Matrix};
use crate::model::ArmId;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllocatorKind {
    Uniform,
    #[serde(alias = "g_optimal", alias = "goptimal")]
    GOptimal,
}

/// Number of pulls per arm for one round. Iteration order is ascending arm
/// index, which is also the order pulls are emitted in.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PullCounts {
    counts: BTreeMap<ArmId, usize>,
}

impl PullCounts {
    pub fn from_pairs<I: IntoIterator<Item = (ArmId, usize)>>(pairs: I) -> Self {
        PullCounts {
            counts: pairs.into_iter().collect(),
        }
    }

    pub fn get(&self, arm: ArmId) -> usize {
        self.counts.get(&arm).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ArmId, usize)> + '_ {
        self.counts.iter().map(|(&a, &n)| (a, n))
    }

    /// Counts in the order of `arms`.
    pub fn as_vec(&self, arms: &[ArmId]) -> Vec<usize> {
        arms.iter().map(|&a| self.get(a)).collect()
    }

    /// Pull order for a uniform round: round-robin by ascending index.
    pub fn round_robin_sequence(&self) -> Vec<ArmId> {
        let mut left: Vec<(ArmId, usize)> = self.iter().filter(|&(_, n)| n > 0).collect();
        let mut seq = Vec::with_capacity(self.total());
        while !left.is_empty() {
            for (arm, n) in left.iter_mut() {
                seq.push(*arm);
                *n -= 1;
            }
            left.retain(|&(_, n)| n > 0);
        }
        seq
    }

    /// Pull order for a design round: pull `t` goes to arm `i` iff
    /// `t ∈ (Σ_{j<i} N_j, Σ_{j≤i} N_j]`.
    pub fn block_sequence(&self) -> Vec<ArmId> {
        self.iter()
            .flat_map(|(arm, n)| std::iter::repeat_n(arm, n))
            .collect()
    }
}

pub fn allocate_uniform(n: usize, active: &[ArmId]) -> Result<PullCounts> {
    if active.is_empty() {
        return Err(Error::Domain(
            "uniform allocation over an empty active set".into(),
        ));
    }
    let mut sorted = active.to_vec();
    sorted.sort();
    if n < sorted.len() {
        debug!(
            "round budget {n} is smaller than the active set ({}); some arms get no pull",
            sorted.len()
        );
    }
    let base = n / sorted.len();
    let extra = n % sorted.len();
    Ok(PullCounts::from_pairs(
        sorted
            .into_iter()
            .enumerate()
            .map(|(i, a)| (a, base + usize::from(i < extra))),
    ))
}

/// Design weights over the active arms, plus `g(w) = max_x φ(x)ᵀA(w)†φ(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignWeights<T> {
    pub arms: Vec<ArmId>,
    pub weights: Vec<T>,
    pub objective: T,
    /// Dimension of the span of the active features.
    pub active_dim: usize,
    /// Best objective seen after each iteration (non-increasing).
    pub history: Vec<T>,
}

impl<T: Scalar> DesignWeights<T> {
    pub fn weight(&self, arm: ArmId) -> T {
        self.arms
            .iter()
            .position(|&a| a == arm)
            .map(|i| self.weights[i])
            .unwrap_or_else(T::zero)
    }
}

/// Settings for the mirror-descent solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignSolverConfig {
    pub epsilon: f64,
    pub max_iterations: usize,
}

impl Default for DesignSolverConfig {
    fn default() -> Self {
        DesignSolverConfig {
            epsilon: 0.1,
            max_iterations: 5000,
        }
    }
}

/// `Φ(ΦᵀVΦ)⁻¹Φᵀ` for `Φ` any basis of the span of `active_features`.
/// Computed with the orthonormal basis `Q` from the greedy scan, which gives
/// the same matrix as `Q(QᵀVQ)⁻¹Qᵀ` without squaring the conditioning of
/// the raw feature columns.
pub fn pseudo_inverse<T: Scalar, V: AsRef<[T]>>(
    gram: &Matrix<T>,
    active_features: &[V],
) -> Result<Matrix<T>> {
    if active_features.is_empty() {
        return Err(Error::Domain(
            "pseudo-inverse needs at least one active feature".into(),
        ));
    }
    let q = orthonormal_basis(active_features);
    let d = gram.nrows();
    if q.is_empty() {
        // All active features are zero: the only consistent answer is 0.
        return Ok(Matrix::zeros(d, d));
    }
    let q = Matrix::from_columns(&q)?;
    let inner = q.transpose().matmul(gram)?.matmul(&q)?;
    let inv = inner.spd_inverse().map_err(|e| match e {
        Error::Numerical(msg) => {
            Error::Numerical(format!("QᵀVQ is singular on the active span: {msg}"))
        }
        other => other,
    })?;
    q.matmul(&inv)?.matmul(&q.transpose())
}

fn design_matrix<T: Scalar>(features: &[Vec<T>], weights: &[T]) -> Matrix<T> {
    let d = features[0].len();
    let mut a = Matrix::zeros(d, d);
    for (phi, &w) in features.iter().zip(weights) {
        if w == T::zero() {
            continue;
        }
        for i in 0..d {
            let wi = w * phi[i];
            for j in 0..d {
                a[(i, j)] += wi * phi[j];
            }
        }
    }
    a
}

/// Leverages `φ(x)ᵀA(w)†φ(x)` of every feature.
fn leverages<T: Scalar>(features: &[Vec<T>], weights: &[T]) -> Result<Vec<T>> {
    let a = design_matrix(features, weights);
    let a_pinv = pseudo_inverse(&a, features)?;
    Ok(features
        .iter()
        .map(|phi| a_pinv.quadratic_form(phi))
        .collect())
}

/// Index of the maximum, lowest index on ties.
fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Entropic mirror descent for the G-optimal design over the simplex.
///
/// `features` holds φ for each entry of `arms`, in the same order. The
/// iterate follows the exponentiated gradient of `log det A(w)` on the
/// active span, whose coordinates are the leverages `φ_iᵀA(w)†φ_i`; by the
/// Kiefer–Wolfowitz equivalence its minimizer also minimizes
/// `g(w) = max_x φ(x)ᵀA(w)†φ(x)`, with optimum `d_act`. The solver stops
/// once `g(w) ≤ (1+ε)·d_act` and returns the best design seen.
pub fn solve_g_optimal<T: Scalar>(
    arms: &[ArmId],
    features: &[Vec<T>],
    config: DesignSolverConfig,
) -> Result<DesignWeights<T>> {
    if arms.is_empty() || arms.len() != features.len() {
        return Err(Error::Domain(format!(
            "design needs one feature per arm ({} arms, {} features)",
            arms.len(),
            features.len()
        )));
    }
    if !(config.epsilon > 0.0 && config.epsilon < 1.0) {
        return Err(Error::Config(format!(
            "G-optimal epsilon must lie in (0, 1), got {}",
            config.epsilon
        )));
    }
    let active_dim = greedy_basis(features).len();
    if active_dim == 0 {
        return Err(Error::Domain(
            "active features span only the zero vector".into(),
        ));
    }
    let k = arms.len();
    let target = T::lit(1.0 + config.epsilon) * T::of_usize(active_dim);
    let eta = T::one() / T::of_usize(active_dim);

    let mut w = vec![T::one() / T::of_usize(k); k];
    let mut lev = leverages(features, &w)?;
    let mut best = (w.clone(), lev[argmax(&lev)]);
    let mut history = vec![best.1];

    let mut iterations = 0;
    while best.1 > target && iterations < config.max_iterations {
        iterations += 1;
        for (wi, &li) in w.iter_mut().zip(&lev) {
            *wi = *wi * (eta * li).exp();
        }
        let total: T = w.iter().copied().sum();
        w.iter_mut().for_each(|wi| *wi /= total);

        lev = leverages(features, &w)?;
        let objective = lev[argmax(&lev)];
        if objective < best.1 {
            best = (w.clone(), objective);
        }
        history.push(best.1);
    }
    debug!(
        "g-optimal design: {iterations} iterations, objective {} (d_act = {active_dim})",
        best.1
    );

    if best.1 > target {
        return Err(Error::DesignNotConverged {
            weights: best.0.iter().map(|v| v.as_f64()).collect(),
            objective: best.1.as_f64(),
            target: target.as_f64(),
            iterations,
        });
    }
    Ok(DesignWeights {
        arms: arms.to_vec(),
        weights: best.0,
        objective: best.1,
        active_dim,
        history,
    })
}

/// Integer pull counts from design weights: largest-remainder apportionment
/// of `n·w_i`, then at least one pull for every arm of the greedy basis.
///
/// `kappa` is validated to lie in `(0, 1/3]`; the apportionment itself does
/// not use it.
pub fn round_design<T: Scalar>(
    n: usize,
    design: &DesignWeights<T>,
    kappa: f64,
    features: &[Vec<T>],
) -> Result<PullCounts> {
    if !(kappa > 0.0 && kappa <= 1.0 / 3.0) {
        return Err(Error::Config(format!(
            "kappa must lie in (0, 1/3], got {kappa}"
        )));
    }
    let k = design.arms.len();
    if features.len() != k {
        return Err(Error::Domain(
            "features do not match the design's arms".into(),
        ));
    }
    let basis = greedy_basis(features);
    if n < basis.len() {
        return Err(Error::Config(format!(
            "round budget {n} cannot cover the {}-dimensional active span",
            basis.len()
        )));
    }
    if n < 45 * basis.len() {
        debug!(
            "round budget {n} is below 45·d_act = {}; concentration guarantee does not apply",
            45 * basis.len()
        );
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&i| design.arms[i]);

    let nf = T::of_usize(n);
    let mut counts = vec![0usize; k];
    let mut remainders = Vec::with_capacity(k);
    for &i in &order {
        let share = nf * design.weights[i].max(T::zero());
        let floor = share.floor();
        counts[i] = floor.to_usize().unwrap_or(0);
        remainders.push((i, share - floor));
    }
    let assigned: usize = counts.iter().sum();
    let left = n.saturating_sub(assigned);
    // Stable sort keeps ascending arm index among equal remainders.
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    for &(i, _) in remainders.iter().cycle().take(left) {
        counts[i] += 1;
    }
    // Floors of weights summing to slightly above one could overshoot.
    while counts.iter().sum::<usize>() > n {
        let i = largest_count(&counts, &order, &[]);
        counts[i] -= 1;
    }

    for &b in &basis {
        if counts[b] == 0 {
            let donor = largest_count(&counts, &order, &basis_needing(&counts, &basis, b));
            counts[donor] -= 1;
            counts[b] = 1;
        }
    }

    Ok(PullCounts::from_pairs(
        design.arms.iter().copied().zip(counts.iter().copied()),
    ))
}

/// Basis arms that must keep at least one pull while `b` is being filled.
fn basis_needing(counts: &[usize], basis: &[usize], filling: usize) -> Vec<usize> {
    basis
        .iter()
        .copied()
        .filter(|&j| j != filling && counts[j] <= 1)
        .collect()
}

/// Position with the largest count (lowest arm index on ties), skipping
/// positions in `protected`.
fn largest_count(counts: &[usize], order: &[usize], protected: &[usize]) -> usize {
    let mut best: Option<usize> = None;
    for &i in order {
        if protected.contains(&i) || counts[i] == 0 {
            continue;
        }
        if best.is_none_or(|b| counts[i] > counts[b]) {
            best = Some(i);
        }
    }
    best.expect("budget covers the basis, so some count can be decremented")
}
