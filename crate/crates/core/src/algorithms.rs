//! Round-based elimination: GenSec for the best feasible arm, GenPSI for
//! the Pareto set, and the uniform-sampling baseline.
//!
//! Every round allocates the round budget over the active arms, pulls,
//! re-estimates the means and eliminates. Pull randomness for round `r` of
//! run `run` comes from the stream `(seed, [run, r, 0])`; network
//! initialization uses `(seed, [run, r, 1])`.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::allocate::{
    allocate_uniform, round_design, solve_g_optimal, AllocatorKind, DesignSolverConfig, PullCounts,
};
use crate::error::{Error, Result};
use crate::estimate::{
    estimate_sample_mean, fit_linear, mlp_fit, mlp_predict, predict_linear, EstimatorKind,
    MeanEstimates, MlpConfig, MlpDataScope, MlpParams,
};
use crate::gaps::{by_decreasing_gap, pareto_gaps_of, GapReport};
use crate::model::{
    env_pull, ArmId, Environment, Observation, ObservationBatch, RewardVector, RngStream,
};
use crate::scalar::Scalar;
use crate::schedule::{
    ceil_log2, linear_budget_floor, make_schedule_with, ScheduleOptions, SchedulerKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmKind {
    Gensec,
    Genpsi,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Constrained,
    Pareto,
}

/// How GenPSI removes arms each round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EliminatorKind {
    /// Remove the largest empirical gaps; accept removed arms on the
    /// empirical front, reject the rest.
    #[default]
    Ege,
    /// Keep the `l_r` smallest gaps and output the final active set.
    Truncate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GOptimalConfig {
    pub epsilon: f64,
    pub kappa: f64,
    pub max_iterations: usize,
}

impl Default for GOptimalConfig {
    fn default() -> Self {
        GOptimalConfig {
            epsilon: 0.1,
            kappa: 1.0 / 3.0,
            max_iterations: 5000,
        }
    }
}

/// One algorithm run on one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: AlgorithmKind,
    /// Only consulted by the uniform baseline; GenSec is constrained and
    /// GenPSI is Pareto.
    pub mode: Mode,
    pub scheduler: SchedulerKind,
    pub allocator: AllocatorKind,
    pub estimator: EstimatorKind,
    pub eliminator: EliminatorKind,
    /// Total budget `B`.
    pub budget: usize,
    pub tau: Option<f64>,
    pub seed: u64,
    /// Run index, the first element of every random stream path.
    pub run: u64,
    pub g_optimal: GOptimalConfig,
    pub mlp: MlpConfig,
    /// Refuse linear pipelines below `B = 45·d·⌈log₂K⌉`.
    pub enforce_linear_budget: bool,
    /// Give the pulls lost to flooring to the last round.
    pub redistribute_leftover: bool,
}

impl RunConfig {
    /// Defaults: successive rejects, uniform allocation, sample means, EGE.
    pub fn new(algorithm: AlgorithmKind, budget: usize, seed: u64) -> Self {
        RunConfig {
            algorithm,
            mode: match algorithm {
                AlgorithmKind::Genpsi => Mode::Pareto,
                _ => Mode::Constrained,
            },
            scheduler: SchedulerKind::SuccessiveRejects,
            allocator: AllocatorKind::Uniform,
            estimator: EstimatorKind::Mean,
            eliminator: EliminatorKind::Ege,
            budget,
            tau: None,
            seed,
            run: 0,
            g_optimal: GOptimalConfig::default(),
            mlp: MlpConfig::default(),
            enforce_linear_budget: true,
            redistribute_leftover: false,
        }
    }

    pub fn effective_mode(&self) -> Mode {
        match self.algorithm {
            AlgorithmKind::Gensec => Mode::Constrained,
            AlgorithmKind::Genpsi => Mode::Pareto,
            AlgorithmKind::Uniform => self.mode,
        }
    }

    fn tau<T: Scalar>(&self) -> Result<T> {
        match self.tau {
            Some(t) if !t.is_nan() => Ok(T::lit(t)),
            Some(_) => Err(Error::Config("tau is NaN".into())),
            None => Err(Error::Config("the constrained mode needs tau".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    Arm(ArmId),
    Set(Vec<ArmId>),
}

impl Selection {
    pub fn arms(&self) -> Vec<ArmId> {
        match self {
            Selection::Arm(a) => vec![*a],
            Selection::Set(s) => s.clone(),
        }
    }
}

/// What happened in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    /// Active set entering the round, ascending.
    pub active: Vec<ArmId>,
    /// Pulls per active arm, same order.
    pub pulls: Vec<usize>,
    /// Estimated means per active arm, same order.
    pub estimates: Vec<Vec<f64>>,
    pub removed: Vec<ArmId>,
    pub accepted: Vec<ArmId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub selected: Selection,
    pub rounds: Vec<RoundLog>,
    pub pulls_used: usize,
}

fn desc<T: Scalar>(a: T, b: T) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

/// Feasible arms (`μ̂₂ > τ`) by decreasing `μ̂₁`, then the rest by
/// decreasing `μ̂₂`; ties by ascending index.
pub fn rank_constrained<T: Scalar>(estimates: &MeanEstimates<T>, tau: T) -> Vec<ArmId> {
    let (mut feasible, mut infeasible): (Vec<_>, Vec<_>) =
        estimates.iter().partition(|(_, mu)| mu[1] > tau);
    feasible.sort_by(|a, b| desc(a.1[0], b.1[0]).then(a.0.cmp(&b.0)));
    infeasible.sort_by(|a, b| desc(a.1[1], b.1[1]).then(a.0.cmp(&b.0)));
    feasible
        .into_iter()
        .chain(infeasible)
        .map(|(a, _)| a)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Elimination {
    pub active: Vec<ArmId>,
    pub accepted: Vec<ArmId>,
    pub rejected: Vec<ArmId>,
}

/// Shrinks `active` to `keep` arms by empirical gap.
pub fn eliminate_pareto<T: Scalar>(
    active: &[ArmId],
    keep: usize,
    gaps: &GapReport<T>,
    front: &[ArmId],
    kind: EliminatorKind,
) -> Elimination {
    let mut order = active.to_vec();
    by_decreasing_gap(gaps, &mut order);
    let cut = active.len().saturating_sub(keep);
    let removed = &order[..cut];
    let mut next: Vec<ArmId> = order[cut..].to_vec();
    next.sort();
    let (mut accepted, mut rejected): (Vec<ArmId>, Vec<ArmId>) = match kind {
        EliminatorKind::Ege => removed.iter().partition(|a| front.contains(a)),
        EliminatorKind::Truncate => (Vec::new(), removed.to_vec()),
    };
    accepted.sort();
    rejected.sort();
    Elimination {
        active: next,
        accepted,
        rejected,
    }
}

/// `48⌈log₂K⌉·exp(−(a/4)·⌊B/⌈log₂K⌉⌋/(d·H))` with `a = 1/(6σ²)`.
pub fn theorem_bound(k: usize, d: usize, sigma: f64, budget: usize, hardness: f64) -> Result<f64> {
    if k < 2 || d == 0 {
        return Err(Error::Config(format!(
            "bound needs K >= 2 and d >= 1, got K={k}, d={d}"
        )));
    }
    let floor = linear_budget_floor(k, d);
    if budget < floor {
        return Err(Error::Config(format!(
            "bound needs B >= 45·d·⌈log₂K⌉ = {floor}, got B={budget}"
        )));
    }
    if !(hardness > 0.0 && hardness.is_finite()) || !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!(
            "bound needs finite H > 0 and sigma > 0, got H={hardness}, sigma={sigma}"
        )));
    }
    let l = ceil_log2(k);
    let a = 1.0 / (6.0 * sigma * sigma);
    let exponent = a / 4.0 * (budget / l) as f64 / (d as f64 * hardness);
    Ok(48.0 * l as f64 * (-exponent).exp())
}

/// Rejects component pairings that cannot work. A G-optimal design leaves
/// zero-weight arms unpulled, so it needs a model-based estimator.
pub fn check_pipeline(
    algorithm: AlgorithmKind,
    allocator: AllocatorKind,
    estimator: EstimatorKind,
) -> Result<()> {
    if algorithm != AlgorithmKind::Uniform
        && allocator == AllocatorKind::GOptimal
        && estimator == EstimatorKind::Mean
    {
        return Err(Error::Config(
            "G-optimal allocation needs the linear or mlp estimator; sample means leave unpulled arms unestimated".into(),
        ));
    }
    Ok(())
}

pub fn run<T: Scalar, E: Environment<T> + ?Sized>(
    config: &RunConfig,
    env: &E,
) -> Result<RunResult> {
    match config.algorithm {
        AlgorithmKind::Gensec => run_gensec(config, env),
        AlgorithmKind::Genpsi => run_genpsi(config, env),
        AlgorithmKind::Uniform => run_uniform_baseline(config, env, config.mode),
    }
}

/// State carried across the rounds of one run.
struct Runner<'a, T: Scalar, E: ?Sized> {
    config: &'a RunConfig,
    env: &'a E,
    batch: ObservationBatch<T>,
    network: Option<MlpParams<T>>,
    /// Estimates of the previous round, reused when a round has no pulls.
    last: Option<MeanEstimates<T>>,
    pulls_used: usize,
}

struct RoundOutcome<T: Scalar> {
    counts: PullCounts,
    estimates: MeanEstimates<T>,
    design_objective: Option<f64>,
}

impl<'a, T: Scalar, E: Environment<T> + ?Sized> Runner<'a, T, E> {
    fn new(config: &'a RunConfig, env: &'a E) -> Result<Self> {
        let k = env.num_arms();
        if k < 2 {
            return Err(Error::Config(format!("need at least two arms, got {k}")));
        }
        check_pipeline(config.algorithm, config.allocator, config.estimator)?;
        let needs_features =
            config.allocator == AllocatorKind::GOptimal || config.estimator != EstimatorKind::Mean;
        if needs_features && env.features().is_none() {
            return Err(Error::Config(format!(
                "{:?} allocation with the {:?} estimator needs an environment with features",
                config.allocator, config.estimator
            )));
        }
        Ok(Runner {
            config,
            env,
            batch: ObservationBatch::new(),
            network: None,
            last: None,
            pulls_used: 0,
        })
    }

    fn schedule_options(&self) -> ScheduleOptions {
        let linear =
            self.config.estimator == EstimatorKind::Linear && self.config.enforce_linear_budget;
        ScheduleOptions {
            linear_dim: linear
                .then(|| self.env.features().map(|f| f.ncols()))
                .flatten(),
            redistribute_leftover: self.config.redistribute_leftover,
        }
    }

    fn feature(&self, arm: ArmId) -> Vec<T> {
        self.env
            .features()
            .map(|f| f.row(arm.index()).to_vec())
            .unwrap_or_default()
    }

    fn play_round(
        &mut self,
        round: usize,
        budget: usize,
        active: &[ArmId],
    ) -> Result<RoundOutcome<T>> {
        let cfg = self.config;
        let base = RngStream::new(cfg.seed, &[cfg.run, round as u64]);
        let mut pull_rng = base.child(0);
        let active_features: Vec<Vec<T>> = active.iter().map(|&a| self.feature(a)).collect();

        // SR can schedule a round with no new pulls; nothing to refit then.
        if budget == 0 {
            if let Some(last) = &self.last {
                return Ok(RoundOutcome {
                    counts: PullCounts::from_pairs(active.iter().map(|&a| (a, 0))),
                    estimates: MeanEstimates::from_pairs(
                        active.iter().map(|&a| {
                            (a, last.get(a).expect("active arms were estimated").clone())
                        }),
                    ),
                    design_objective: None,
                });
            }
        }

        let (counts, sequence, design_objective) = match cfg.allocator {
            AllocatorKind::Uniform => {
                let counts = allocate_uniform(budget, active)?;
                let seq = counts.round_robin_sequence();
                (counts, seq, None)
            }
            AllocatorKind::GOptimal => {
                let solver = DesignSolverConfig {
                    epsilon: cfg.g_optimal.epsilon,
                    max_iterations: cfg.g_optimal.max_iterations,
                };
                let design = solve_g_optimal(active, &active_features, solver)?;
                let counts = round_design(budget, &design, cfg.g_optimal.kappa, &active_features)?;
                let seq = counts.block_sequence();
                (counts, seq, Some(design.objective.as_f64()))
            }
        };

        for arm in sequence {
            let reward = env_pull(self.env, arm, &mut pull_rng)?;
            self.batch.push(Observation {
                arm,
                feature: self.feature(arm),
                reward,
                round,
            });
            self.pulls_used += 1;
        }
        if self.pulls_used > cfg.budget {
            return Err(Error::Numerical(format!(
                "{} pulls exceed the budget {}",
                self.pulls_used, cfg.budget
            )));
        }

        let pairs: Vec<(ArmId, &[T])> = active
            .iter()
            .copied()
            .zip(active_features.iter().map(|f| f.as_slice()))
            .collect();
        let estimates = match cfg.estimator {
            EstimatorKind::Mean => estimate_sample_mean(&self.batch, active)?,
            EstimatorKind::Linear => {
                let fit = fit_linear(&self.batch.round(round), &active_features)?;
                predict_linear(&fit, &pairs)
            }
            EstimatorKind::Mlp => {
                let current;
                let data = match cfg.mlp.data_scope {
                    MlpDataScope::Cumulative => &self.batch,
                    MlpDataScope::CurrentRound => {
                        current = self.batch.round(round);
                        &current
                    }
                };
                let fit = mlp_fit(data, &cfg.mlp, &mut base.child(1), self.network.as_ref())?;
                let est = mlp_predict(&fit.params, &pairs);
                self.network = Some(fit.params);
                est
            }
        };
        self.last = Some(estimates.clone());
        Ok(RoundOutcome {
            counts,
            estimates,
            design_objective,
        })
    }
}

fn estimate_rows<T: Scalar>(estimates: &MeanEstimates<T>, active: &[ArmId]) -> Vec<Vec<f64>> {
    estimates
        .rows_for(active)
        .into_iter()
        .map(|r| r.iter().map(|v| v.as_f64()).collect())
        .collect()
}

fn require_pair<T: Scalar, E: Environment<T> + ?Sized>(env: &E) -> Result<()> {
    if env.num_objectives() != 2 {
        return Err(Error::UnsupportedDimension(format!(
            "the constrained path needs exactly 2 objectives, got {}",
            env.num_objectives()
        )));
    }
    Ok(())
}

/// Best feasible arm identification.
pub fn run_gensec<T: Scalar, E: Environment<T> + ?Sized>(
    config: &RunConfig,
    env: &E,
) -> Result<RunResult> {
    require_pair(env)?;
    let tau: T = config.tau()?;
    let mut runner = Runner::new(config, env)?;
    let k = env.num_arms();
    let schedule = make_schedule_with(
        config.scheduler,
        k,
        config.budget,
        runner.schedule_options(),
    )?;

    let mut active: Vec<ArmId> = (0..k).map(ArmId).collect();
    let mut rounds = Vec::with_capacity(schedule.rounds);
    for r in 1..=schedule.rounds {
        let outcome = runner
            .play_round(r, schedule.pulls_per_round[r - 1], &active)
            .map_err(|e| Error::in_round(r, e))?;
        let ranking = rank_constrained(&outcome.estimates, tau);
        let keep = schedule.keep_counts[r - 1].min(ranking.len());
        let mut next = ranking[..keep].to_vec();
        next.sort();
        let mut removed: Vec<ArmId> = ranking[keep..].to_vec();
        removed.sort();
        debug!("gensec round {r}: kept {next:?}");

        rounds.push(RoundLog {
            round: r,
            pulls: outcome.counts.as_vec(&active),
            estimates: estimate_rows(&outcome.estimates, &active),
            active: std::mem::replace(&mut active, next),
            removed,
            accepted: Vec::new(),
            design_objective: outcome.design_objective,
        });
        if active.len() == 1 {
            break;
        }
    }
    let selected = if active.len() == 1 {
        active[0]
    } else {
        // Only reachable with an unusual schedule; fall back to the ranking.
        let last = rounds.last().expect("at least one round");
        let est =
            MeanEstimates::from_pairs(last.active.iter().zip(&last.estimates).map(|(&a, v)| {
                (
                    a,
                    RewardVector::new_unchecked(v.iter().map(|&x| T::lit(x)).collect()),
                )
            }));
        *rank_constrained(&est, tau)
            .iter()
            .find(|a| active.contains(a))
            .expect("active arms are ranked")
    };
    Ok(RunResult {
        selected: Selection::Arm(selected),
        rounds,
        pulls_used: runner.pulls_used,
    })
}

/// Pareto set identification.
///
/// The empirical front and gaps of each round are taken over every arm:
/// active arms carry their current estimates, removed arms the estimates
/// they had when removed. Only active arms are eliminated.
pub fn run_genpsi<T: Scalar, E: Environment<T> + ?Sized>(
    config: &RunConfig,
    env: &E,
) -> Result<RunResult> {
    let mut runner = Runner::new(config, env)?;
    let k = env.num_arms();
    let schedule = make_schedule_with(
        config.scheduler,
        k,
        config.budget,
        runner.schedule_options(),
    )?;

    let mut active: Vec<ArmId> = (0..k).map(ArmId).collect();
    let mut frozen: BTreeMap<ArmId, Vec<T>> = BTreeMap::new();
    let mut accepted_all: Vec<ArmId> = Vec::new();
    let mut last_front: Vec<ArmId> = Vec::new();
    let mut rounds = Vec::with_capacity(schedule.rounds);

    for r in 1..=schedule.rounds {
        let outcome = runner
            .play_round(r, schedule.pulls_per_round[r - 1], &active)
            .map_err(|e| Error::in_round(r, e))?;
        let mut points: BTreeMap<ArmId, Vec<T>> = frozen.clone();
        for (arm, est) in outcome.estimates.iter() {
            points.insert(arm, est.values().to_vec());
        }
        let (arms, rows): (Vec<ArmId>, Vec<Vec<T>>) = points.into_iter().unzip();
        let report = pareto_gaps_of(&arms, &rows);
        let keep = schedule.keep_counts[r - 1];
        let elim = eliminate_pareto(&active, keep, &report, &report.front, config.eliminator);
        for arm in elim.accepted.iter().chain(&elim.rejected) {
            let est = outcome
                .estimates
                .get(*arm)
                .expect("active arms are estimated");
            frozen.insert(*arm, est.values().to_vec());
        }
        accepted_all.extend(&elim.accepted);
        last_front = report.front.clone();

        let mut removed: Vec<ArmId> = elim
            .accepted
            .iter()
            .chain(&elim.rejected)
            .copied()
            .collect();
        removed.sort();
        rounds.push(RoundLog {
            round: r,
            pulls: outcome.counts.as_vec(&active),
            estimates: estimate_rows(&outcome.estimates, &active),
            active: std::mem::replace(&mut active, elim.active),
            removed,
            accepted: elim.accepted,
            design_objective: outcome.design_objective,
        });
    }

    let mut selected = accepted_all;
    match config.eliminator {
        EliminatorKind::Ege => selected.extend(active.iter().filter(|a| last_front.contains(a))),
        EliminatorKind::Truncate => selected.extend(&active),
    }
    selected.sort();
    Ok(RunResult {
        selected: Selection::Set(selected),
        rounds,
        pulls_used: runner.pulls_used,
    })
}

/// Spreads the whole budget evenly, then reads the answer off the sample means.
pub fn run_uniform_baseline<T: Scalar, E: Environment<T> + ?Sized>(
    config: &RunConfig,
    env: &E,
    mode: Mode,
) -> Result<RunResult> {
    let tau: Option<T> = match mode {
        Mode::Constrained => {
            require_pair(env)?;
            Some(config.tau()?)
        }
        Mode::Pareto => None,
    };
    let k = env.num_arms();
    if config.budget < k {
        return Err(Error::Config(format!(
            "uniform baseline needs B >= K, got B={} and K={k}",
            config.budget
        )));
    }
    let baseline = RunConfig {
        allocator: AllocatorKind::Uniform,
        estimator: EstimatorKind::Mean,
        ..config.clone()
    };
    let mut runner = Runner::new(&baseline, env)?;
    let arms: Vec<ArmId> = (0..k).map(ArmId).collect();
    let outcome = runner
        .play_round(1, config.budget, &arms)
        .map_err(|e| Error::in_round(1, e))?;

    let selection = match tau {
        Some(tau) => Selection::Arm(rank_constrained(&outcome.estimates, tau)[0]),
        None => {
            let rows: Vec<&[T]> = outcome.estimates.rows_for(&arms);
            Selection::Set(pareto_gaps_of(&arms, &rows).front)
        }
    };
    Ok(RunResult {
        selected: selection,
        rounds: vec![RoundLog {
            round: 1,
            pulls: outcome.counts.as_vec(&arms),
            estimates: estimate_rows(&outcome.estimates, &arms),
            active: arms,
            removed: Vec::new(),
            accepted: Vec::new(),
            design_objective: None,
        }],
        pulls_used: runner.pulls_used,
    })
}
