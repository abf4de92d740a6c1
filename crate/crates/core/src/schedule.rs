//! Round plans `(R, {n_r}, {l_r})`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    #[serde(alias = "sh")]
    SequentialHalving,
    #[serde(alias = "sr")]
    SuccessiveRejects,
}

impl std::str::FromStr for SchedulerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sh" | "sequential_halving" => Ok(SchedulerKind::SequentialHalving),
            "sr" | "successive_rejects" => Ok(SchedulerKind::SuccessiveRejects),
            other => Err(Error::Config(format!(
                "unknown scheduler `{other}` (expected sh or sr)"
            ))),
        }
    }
}

/// Extra knobs for [`make_schedule`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScheduleOptions {
    /// Feature dimension of a linear pipeline; enforces `B >= 45·d·⌈log₂K⌉`.
    pub linear_dim: Option<usize>,
    /// Hand the budget left over by flooring to the final round.
    pub redistribute_leftover: bool,
}

/// Round plan. `keep_counts[r]` arms survive round `r + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: SchedulerKind,
    pub num_arms: usize,
    pub budget: usize,
    pub rounds: usize,
    pub pulls_per_round: Vec<usize>,
    pub keep_counts: Vec<usize>,
    /// Successive Rejects only: cumulative per-arm pull target after each round.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_arm_targets: Option<Vec<usize>>,
}

impl Schedule {
    pub fn total_pulls(&self) -> usize {
        self.pulls_per_round.iter().sum()
    }

    /// Active-set size entering round `r` (1-based); `l_0 = K`.
    pub fn active_before(&self, round: usize) -> usize {
        if round <= 1 {
            self.num_arms
        } else {
            self.keep_counts[round - 2]
        }
    }
}

/// `⌈log₂ k⌉` for `k >= 1`.
pub fn ceil_log2(k: usize) -> usize {
    assert!(k >= 1);
    (usize::BITS - (k - 1).leading_zeros()) as usize
}

/// `½ + Σ_{i=2}^{K} 1/i`.
pub fn log_bar(k: usize) -> f64 {
    0.5 + (2..=k).map(|i| 1.0 / i as f64).sum::<f64>()
}

/// Minimum total budget for the linear pipeline's guarantee.
pub fn linear_budget_floor(k: usize, d: usize) -> usize {
    45 * d * ceil_log2(k)
}

pub fn make_schedule(kind: SchedulerKind, k: usize, budget: usize) -> Result<Schedule> {
    make_schedule_with(kind, k, budget, ScheduleOptions::default())
}

pub fn make_schedule_with(
    kind: SchedulerKind,
    k: usize,
    budget: usize,
    opts: ScheduleOptions,
) -> Result<Schedule> {
    if k < 2 {
        return Err(Error::Config(format!(
            "scheduler needs K >= 2 arms, got K={k}"
        )));
    }
    if budget < k {
        return Err(Error::Config(format!(
            "budget B={budget} is below the number of arms K={k} (need B >= K)"
        )));
    }
    if let Some(d) = opts.linear_dim {
        let floor = linear_budget_floor(k, d);
        if budget < floor {
            return Err(Error::Config(format!(
                "budget B={budget} is below the linear-pipeline bound 45·d·⌈log₂K⌉ = {floor} (d={d}, K={k})"
            )));
        }
    }
    let mut schedule = match kind {
        SchedulerKind::SequentialHalving => sequential_halving(k, budget),
        SchedulerKind::SuccessiveRejects => successive_rejects(k, budget),
    };
    if opts.redistribute_leftover {
        let left = budget - schedule.total_pulls();
        if let Some(last) = schedule.pulls_per_round.last_mut() {
            *last += left;
        }
    }
    Ok(schedule)
}

fn sequential_halving(k: usize, budget: usize) -> Schedule {
    let rounds = ceil_log2(k);
    let per_round = budget / rounds;
    let keep_counts = (1..=rounds).map(|r| k.div_ceil(1 << r)).collect();
    Schedule {
        kind: SchedulerKind::SequentialHalving,
        num_arms: k,
        budget,
        rounds,
        pulls_per_round: vec![per_round; rounds],
        keep_counts,
        per_arm_targets: None,
    }
}

fn successive_rejects(k: usize, budget: usize) -> Schedule {
    let rounds = k - 1;
    let lb = log_bar(k);
    let spare = (budget - k) as f64;
    let mut targets = Vec::with_capacity(rounds);
    let mut pulls = Vec::with_capacity(rounds);
    let mut prev = 0usize;
    for r in 1..=rounds {
        // With B = K the formula gives zero; every arm still gets one pull.
        let target = ((spare / (lb * (k + 1 - r) as f64)).ceil() as usize).max(1);
        let active = k + 1 - r;
        pulls.push(active * (target - prev));
        targets.push(target);
        prev = target;
    }
    Schedule {
        kind: SchedulerKind::SuccessiveRejects,
        num_arms: k,
        budget,
        rounds,
        pulls_per_round: pulls,
        keep_counts: (1..=rounds).map(|r| k - r).collect(),
        per_arm_targets: Some(targets),
    }
}
