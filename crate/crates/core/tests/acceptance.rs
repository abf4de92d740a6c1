//! Acceptance criteria 1–11, one PASS/FAIL line each.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;

use mopx::algorithms::{run, theorem_bound, AlgorithmKind, Mode, RunConfig};
use mopx::allocate::{round_design, solve_g_optimal, AllocatorKind, DesignSolverConfig};
use mopx::env::{GaussianEnv, LinearEnv};
use mopx::estimate::{fit_linear, mlp_loss_grad, predict_linear, EstimatorKind, MlpParams};
use mopx::gaps::{best_feasible, constrained_gaps, hardness, pareto_front, pareto_gaps, Gap};
use mopx::harness::{aggregate, run_experiment, write_summary_csv, ExperimentConfig};
use mopx::linalg::greedy_basis;
use mopx::metrics::hv_recovery;
use mopx::model::{env_pull, ArmId, Instance, Observation, ObservationBatch, RngStream};
use mopx::schedule::{ceil_log2, make_schedule, SchedulerKind};

use common::*;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gap_value(g: Gap<f64>) -> f64 {
    g.as_f64()
}

fn same(a: f64, b: f64) -> f64 {
    if a.is_infinite() && b.is_infinite() && a.signum() == b.signum() {
        0.0
    } else {
        (a - b).abs()
    }
}

fn c1_gap_oracle() -> Outcome {
    let mut worst = 0.0f64;
    let mut front_mismatch = 0;
    let mut r = rng(1);
    for _ in 0..1000 {
        let k = r.random_range(2..=12);
        let m = r.random_range(2..=3);
        let pts = random_means(&mut r, k, m);
        let means = matrix(&pts);
        let front: Vec<usize> = pareto_front(&means).iter().map(|a| a.0).collect();
        if front != oracle_front(&pts) {
            front_mismatch += 1;
        }
        let report = pareto_gaps(&means);
        for (e, o) in report.entries.iter().zip(oracle_pareto_gaps(&pts)) {
            worst = worst.max(same(gap_value(e.gap), o));
        }
        if m == 2 {
            let tau = r.random::<f64>();
            match (
                constrained_gaps(&means, tau),
                oracle_constrained_gaps(&pts, tau),
            ) {
                (Ok(rep), Some((star, gaps))) => {
                    if rep.optimal != Some(ArmId(star)) {
                        front_mismatch += 1;
                    }
                    for (e, o) in rep.entries.iter().zip(gaps) {
                        worst = worst.max(same(gap_value(e.gap), o));
                    }
                }
                (Err(_), None) => {}
                _ => front_mismatch += 1,
            }
        }
    }
    check(
        front_mismatch == 0 && worst <= 1e-12,
        format!("1000 instances, {front_mismatch} set mismatches, max deviation {worst:.1e}"),
    )
}

fn c2_worked_examples() -> Outcome {
    let abcd = matrix(&[
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![0.6, 0.6],
        vec![0.4, 0.4],
    ]);
    let report = pareto_gaps(&abcd);
    let got: Vec<f64> = report.entries.iter().map(|e| gap_value(e.gap)).collect();
    let want = [0.4, 0.4, 0.2, 0.2];
    let pareto_ok = got.iter().zip(want).all(|(g, w)| (g - w).abs() <= 1e-12);

    let cons = matrix(&[vec![0.8, 0.6], vec![0.9, 0.4], vec![0.6, 0.7]]);
    let rep = constrained_gaps(&cons, 0.5).map_err(|e| e.to_string())?;
    let c: Vec<f64> = rep.entries.iter().map(|e| gap_value(e.gap)).collect();
    let h = hardness(&cons, 0.5).map_err(|e| e.to_string())?;
    let cons_ok = c[0] == 0.0
        && (c[1] - 0.1).abs() <= 1e-12
        && (c[2] - 0.1).abs() <= 1e-12
        && (h - 100.0).abs() <= 1e-9;
    check(
        pareto_ok && cons_ok,
        format!("Pareto gaps {got:?}, constrained gaps {c:?}, H = {h}"),
    )
}

fn c3_schedules() -> Outcome {
    let s = make_schedule(SchedulerKind::SequentialHalving, 30, 300).map_err(|e| e.to_string())?;
    let exact = s.rounds == 5 && s.pulls_per_round == [60; 5] && s.keep_counts == [15, 8, 4, 2, 1];
    let mut bad = Vec::new();
    let mut r = rng(3);
    for k in 2..=256usize {
        let mut budgets = vec![k, k + 1, 2 * k, 10 * k, 37 * k + 5];
        budgets.push(r.random_range(k..=50 * k));
        for b in budgets {
            let sh = make_schedule(SchedulerKind::SequentialHalving, k, b).unwrap();
            let rr = ceil_log2(k);
            let mut prev = k;
            let mut ok = sh.rounds == rr
                && sh.total_pulls() <= b
                && b - sh.total_pulls() < rr
                && sh.pulls_per_round.iter().all(|&n| n == b / rr);
            for (i, &l) in sh.keep_counts.iter().enumerate() {
                ok &= l == prev.div_ceil(2) && l == k.div_ceil(1 << (i + 1));
                prev = l;
            }
            ok &= prev == 1;
            if !ok {
                bad.push(format!("SH K={k} B={b}"));
            }

            let sr = make_schedule(SchedulerKind::SuccessiveRejects, k, b).unwrap();
            let targets = sr.per_arm_targets.clone().unwrap_or_default();
            let mut ok = sr.rounds == k - 1 && sr.total_pulls() <= b && targets.len() == k - 1;
            let mut prev_target = 0;
            for (i, &t) in targets.iter().enumerate() {
                let active = k - i;
                ok &= t >= prev_target.max(1)
                    && sr.keep_counts[i] == active - 1
                    && sr.pulls_per_round[i] == active * (t - prev_target);
                prev_target = t;
            }
            if !ok {
                bad.push(format!("SR K={k} B={b}"));
            }
        }
    }
    check(
        exact && bad.is_empty(),
        format!(
            "SH(30, 300) = R {} n {:?} l {:?}; {} property violations over K in [2, 256]{}",
            s.rounds,
            s.pulls_per_round,
            s.keep_counts,
            bad.len(),
            bad.first()
                .map(|b| format!(" (first: {b})"))
                .unwrap_or_default()
        ),
    )
}

fn random_features(r: &mut impl Rng, k: usize, d: usize) -> Vec<Vec<f64>> {
    // A third of the sets span a strict subspace.
    let rank = if r.random_range(0..3) == 0 {
        r.random_range(1..=d)
    } else {
        d
    };
    let basis: Vec<Vec<f64>> = (0..rank)
        .map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    (0..k)
        .map(|_| {
            let c: Vec<f64> = (0..rank).map(|_| r.random_range(-1.0..1.0)).collect();
            (0..d)
                .map(|j| (0..rank).map(|i| c[i] * basis[i][j]).sum())
                .collect()
        })
        .collect()
}

fn c4_g_optimal() -> Outcome {
    let mut r = rng(4);
    let mut worst_ratio = 0.0f64;
    let mut failures = Vec::new();
    for t in 0..100 {
        let k = r.random_range(2..=50);
        let d = r.random_range(1..=10);
        let feats = random_features(&mut r, k, d);
        let arms: Vec<ArmId> = (0..k).map(ArmId).collect();
        let design = match solve_g_optimal(&arms, &feats, DesignSolverConfig::default()) {
            Ok(w) => w,
            Err(e) => {
                failures.push(format!("set {t}: {e}"));
                continue;
            }
        };
        let da = design.active_dim as f64;
        let ratio = design.objective / da;
        worst_ratio = worst_ratio.max(ratio);
        let basis = greedy_basis(&feats);
        let n = r.random_range(basis.len()..=500);
        let counts = round_design(n, &design, 1.0 / 3.0, &feats).map_err(|e| e.to_string())?;
        let covered = basis.iter().all(|&i| counts.get(ArmId(i)) >= 1);
        if design.objective < da - 1e-9 || ratio > 1.1 || counts.total() != n || !covered {
            failures.push(format!(
                "set {t}: objective {} d_act {da} total {} of {n} covered {covered}",
                design.objective,
                counts.total()
            ));
        }
    }
    check(
        failures.is_empty(),
        format!(
            "100 sets, max objective/d_act {worst_ratio:.4}, {} failures{}",
            failures.len(),
            failures
                .first()
                .map(|f| format!(" ({f})"))
                .unwrap_or_default()
        ),
    )
}

fn pull_sequence(
    env: &LinearEnv<f64>,
    order: &[ArmId],
    stream: &mut RngStream,
) -> ObservationBatch<f64> {
    let feats = env.instance().features().unwrap();
    order
        .iter()
        .map(|&arm| Observation {
            arm,
            feature: feats.row(arm.0).to_vec(),
            reward: env_pull(env, arm, stream).unwrap(),
            round: 1,
        })
        .collect()
}

fn max_error(env: &LinearEnv<f64>, batch: &ObservationBatch<f64>) -> Result<f64, String> {
    let inst = env.instance();
    let feats = inst.features().unwrap();
    let rows: Vec<&[f64]> = feats.rows_iter().collect();
    let fit = fit_linear(batch, &rows).map_err(|e| e.to_string())?;
    let pairs: Vec<(ArmId, &[f64])> = rows
        .iter()
        .enumerate()
        .map(|(i, &p)| (ArmId(i), p))
        .collect();
    let est = predict_linear(&fit, &pairs);
    let mut worst = 0.0f64;
    for (arm, mu) in est.iter() {
        for (a, b) in mu.iter().zip(inst.means().row(arm.0)) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

fn c5_linear() -> Outcome {
    let mut r = rng(5);
    let mut exact_worst = 0.0f64;
    for t in 0..50 {
        let k = r.random_range(2..=30);
        let d = r.random_range(1..=8);
        let m = r.random_range(2..=3);
        let feats = random_features(&mut r, k, d);
        let theta: Vec<Vec<f64>> = (0..d)
            .map(|_| (0..m).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let inst = Instance::linear(matrix(&feats), matrix(&theta), 0.0).unwrap();
        let env = LinearEnv::new(inst).unwrap();
        let order: Vec<ArmId> = (0..3 * k).map(|t| ArmId(t % k)).collect();
        let batch = pull_sequence(&env, &order, &mut RngStream::new(t, &[]));
        exact_worst = exact_worst.max(max_error(&env, &batch)?);
    }

    // σ=0.1, d=4, pulls laid out by the rounded G-optimal design.
    let feats = vec![
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
        vec![0.6, 0.8, 0.0, 0.0],
        vec![0.0, 0.6, 0.8, 0.0],
        vec![0.0, 0.0, 0.6, 0.8],
        vec![0.5, 0.5, 0.5, 0.5],
        vec![0.7, -0.3, 0.2, 0.6],
        vec![-0.4, 0.5, 0.6, 0.4],
    ];
    let theta = vec![
        vec![0.5, 0.2],
        vec![-0.3, 0.7],
        vec![0.4, 0.1],
        vec![0.1, -0.2],
    ];
    let env =
        LinearEnv::new(Instance::linear(matrix(&feats), matrix(&theta), 0.1).unwrap()).unwrap();
    let arms: Vec<ArmId> = (0..feats.len()).map(ArmId).collect();
    let design =
        solve_g_optimal(&arms, &feats, DesignSolverConfig::default()).map_err(|e| e.to_string())?;
    let errors = |n: usize| -> Result<Vec<f64>, String> {
        let counts = round_design(n, &design, 1.0 / 3.0, &feats).map_err(|e| e.to_string())?;
        let order = counts.block_sequence();
        (0..200u64)
            .into_par_iter()
            .map(|trial| {
                let batch = pull_sequence(&env, &order, &mut RngStream::new(trial, &[n as u64]));
                max_error(&env, &batch)
            })
            .collect()
    };
    let small = median(&mut errors(1000)?);
    let large = median(&mut errors(4000)?);
    let ratio = large / small;
    check(
        exact_worst < 1e-9 && ratio < 0.6,
        format!(
            "noiseless max error {exact_worst:.1e} (50 instances); median max-error n=4000 / n=1000 = {large:.4} / {small:.4} = {ratio:.3}"
        ),
    )
}

fn c6_mlp_gradient() -> Outcome {
    let mut r = rng(6);
    let mut worst = 0.0f64;
    for t in 0..100u64 {
        let d = r.random_range(1..=5);
        let h = r.random_range(1..=8);
        let m = r.random_range(1..=3);
        let n = r.random_range(1..=10);
        let lambda = if t % 2 == 0 {
            0.0
        } else {
            r.random_range(0.0..0.01)
        };
        let mut params = MlpParams::<f64>::init(d, h, m, &mut RngStream::new(t, &[]));
        let batch: ObservationBatch<f64> = (0..n)
            .map(|i| Observation {
                arm: ArmId(i),
                feature: (0..d).map(|_| r.random_range(-1.0..1.0)).collect(),
                reward: mopx::model::RewardVector::new(
                    (0..m).map(|_| r.random_range(-1.0..1.0)).collect(),
                )
                .unwrap(),
                round: 1,
            })
            .collect();
        let (_, grad) = mlp_loss_grad(&params, &batch, lambda).map_err(|e| e.to_string())?;
        let analytic = grad.to_flat();
        let theta = params.to_flat();
        let step = 1e-6;
        let mut numeric = vec![0.0; theta.len()];
        for i in 0..theta.len() {
            let mut p = theta.clone();
            p[i] = theta[i] + step;
            params.set_flat(&p);
            let up = mlp_loss_grad(&params, &batch, lambda).unwrap().0;
            p[i] = theta[i] - step;
            params.set_flat(&p);
            let down = mlp_loss_grad(&params, &batch, lambda).unwrap().0;
            numeric[i] = (up - down) / (2.0 * step);
        }
        params.set_flat(&theta);
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let scale = norm(&analytic).max(norm(&numeric)).max(1e-8);
        worst = worst.max(norm(&diff) / scale);
    }
    check(
        worst < 1e-4,
        format!("100 configurations, max relative error {worst:.2e}"),
    )
}

fn c7_zero_noise() -> Outcome {
    let mut r = rng(7);
    let mut wrong = Vec::new();
    for t in 0..200u64 {
        let k = r.random_range(2..=12);
        let pts: Vec<Vec<f64>> = (0..k)
            .map(|_| vec![r.random::<f64>(), r.random::<f64>()])
            .collect();
        let mut mu2: Vec<f64> = pts.iter().map(|p| p[1]).collect();
        mu2.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cut = r.random_range(0..k - 1);
        let tau = 0.5 * (mu2[cut] + mu2[cut + 1]);
        let means = matrix(&pts);
        let star = best_feasible(&means, tau).unwrap();
        let front = pareto_front(&means);
        let env = GaussianEnv::new(Instance::from_means(means, 0.0).unwrap());
        for sched in [
            SchedulerKind::SuccessiveRejects,
            SchedulerKind::SequentialHalving,
        ] {
            let mut c = RunConfig::new(AlgorithmKind::Gensec, 4 * k, t);
            c.tau = Some(tau);
            c.scheduler = sched;
            let got = run(&c, &env).map_err(|e| e.to_string())?.selected.arms();
            if got != [star] {
                wrong.push(format!("GenSec {sched:?} instance {t}"));
            }
            let mut c = RunConfig::new(AlgorithmKind::Genpsi, 4 * k, t);
            c.scheduler = sched;
            let mut got = run(&c, &env).map_err(|e| e.to_string())?.selected.arms();
            got.sort();
            if got != front {
                wrong.push(format!("GenPSI {sched:?} instance {t}"));
            }
        }
    }
    check(
        wrong.is_empty(),
        format!(
            "200 instances x {{SR, SH}}, {} wrong selections{}",
            wrong.len(),
            wrong
                .first()
                .map(|w| format!(" (first: {w})"))
                .unwrap_or_default()
        ),
    )
}

/// Errors out of 200 seeds for the linear GenSec pipeline and the uniform
/// baseline at `B = 16·b`.
fn c8_errors(env: &LinearEnv<f64>, b: usize) -> Result<(usize, usize), String> {
    let per_seed: Result<Vec<(bool, bool)>, String> = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let mut c = RunConfig::new(AlgorithmKind::Gensec, 16 * b, seed);
            c.tau = Some(0.5);
            c.scheduler = SchedulerKind::SequentialHalving;
            c.allocator = AllocatorKind::GOptimal;
            c.estimator = EstimatorKind::Linear;
            c.enforce_linear_budget = false;
            let alg = run(&c, env).map_err(|e| e.to_string())?.selected.arms();
            let mut u = RunConfig::new(AlgorithmKind::Uniform, 16 * b, seed);
            u.tau = Some(0.5);
            let base = run(&u, env).map_err(|e| e.to_string())?.selected.arms();
            Ok((alg != [ArmId(0)], base != [ArmId(0)]))
        })
        .collect();
    let per_seed = per_seed?;
    Ok((
        per_seed.iter().filter(|p| p.0).count(),
        per_seed.iter().filter(|p| p.1).count(),
    ))
}

fn c8_constrained_trend() -> Outcome {
    let inst = trend_constrained();
    let means = inst.means().clone();
    let h = hardness(&means, 0.5).map_err(|e| e.to_string())?;
    let min_gap = 1.0 / h.sqrt();
    let env = LinearEnv::new(inst).unwrap();
    let budgets = [5, 10, 20, 40];
    let mut alg = Vec::new();
    let mut base = Vec::new();
    for b in budgets {
        let (a, u) = c8_errors(&env, b)?;
        alg.push(a);
        base.push(u);
    }
    let n = 200.0;
    // One-sided two-proportion z-test against an increase at each step.
    let mut max_z = f64::NEG_INFINITY;
    for w in alg.windows(2) {
        let (p0, p1) = (w[0] as f64 / n, w[1] as f64 / n);
        let pooled = (p0 + p1) / 2.0;
        let se = (pooled * (1.0 - pooled) * 2.0 / n).sqrt();
        let z = if se > 0.0 { (p1 - p0) / se } else { 0.0 };
        max_z = max_z.max(z);
    }
    let at20 = alg[2] as f64 / n;
    let base20 = base[2] as f64 / n;
    check(
        (min_gap - 0.3).abs() < 1e-12 && max_z <= 1.645 && at20 < 0.10 && at20 < base20,
        format!(
            "min gap {min_gap:.3}; errors/200 at b = {budgets:?}: linear {alg:?}, uniform {base:?}; max step z {max_z:.2}; b=20 rate {at20:.3} vs uniform {base20:.3}"
        ),
    )
}

fn c9_pareto_trend() -> Outcome {
    let inst = trend_pareto();
    let means = inst.means().clone();
    let front = pareto_front(&means);
    let env = LinearEnv::new(inst).unwrap();
    let origin = [0.0, 0.0];
    let k = means.nrows();
    let per_seed: Result<Vec<(f64, f64)>, String> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let score = |c: &RunConfig| -> Result<f64, String> {
                let sel = run(c, &env).map_err(|e| e.to_string())?.selected.arms();
                hv_recovery(&sel, &front, &means, &origin).map_err(|e| e.to_string())
            };
            let mut g = RunConfig::new(AlgorithmKind::Genpsi, 20 * k, seed);
            g.scheduler = SchedulerKind::SequentialHalving;
            g.allocator = AllocatorKind::GOptimal;
            g.estimator = EstimatorKind::Linear;
            let mut u = RunConfig::new(AlgorithmKind::Uniform, 20 * k, seed);
            u.mode = Mode::Pareto;
            Ok((score(&g)?, score(&u)?))
        })
        .collect();
    let per_seed = per_seed?;
    let (gm, gc) = mean_ci(&per_seed.iter().map(|p| p.0).collect::<Vec<_>>());
    let (um, uc) = mean_ci(&per_seed.iter().map(|p| p.1).collect::<Vec<_>>());
    check(
        k == 30 && gm >= 95.0 && gm - gc > um + uc,
        format!(
            "K={k}, |front|={}; GenPSI {gm:.2} ± {gc:.2}, uniform {um:.2} ± {uc:.2}",
            front.len()
        ),
    )
}

fn c10_golden() -> Outcome {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let cfg = ExperimentConfig::from_path(&fixtures.join("replay_config.json"))
        .map_err(|e| e.to_string())?;
    let output = run_experiment(&cfg, 1).map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    write_summary_csv(&aggregate(&output.records), &mut bytes).map_err(|e| e.to_string())?;
    let golden = std::fs::read(fixtures.join("golden_summary.csv")).map_err(|e| e.to_string())?;
    let first_diff = bytes.iter().zip(&golden).position(|(a, b)| a != b);
    check(
        bytes == golden && output.failures.is_empty(),
        format!(
            "{} bytes vs golden {} bytes, first difference at {first_diff:?}, {} failed cells",
            bytes.len(),
            golden.len(),
            output.failures.len()
        ),
    )
}

fn c11_bound() -> Outcome {
    // 48·⌈log₂8⌉ = 144; exponent (1/(6·1²))/4 · ⌊270/3⌋ / (2·25) = 0.075.
    // 144·e^(−0.075) evaluated at 30 digits.
    let expected = 133.595_062_031_311_616;
    let got = theorem_bound(8, 2, 1.0, 270, 25.0).map_err(|e| e.to_string())?;
    check(
        (got - expected).abs() <= 1e-6,
        format!("bound {got:.10}, expected {expected:.10}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 11] = [
        (
            "gap-oracle equivalence",
            c1_gap_oracle,
            Duration::from_secs(30),
        ),
        (
            "worked examples",
            c2_worked_examples,
            Duration::from_secs(1),
        ),
        ("schedule exactness", c3_schedules, Duration::from_secs(5)),
        ("G-optimal quality", c4_g_optimal, Duration::from_secs(60)),
        ("linear estimator", c5_linear, Duration::from_secs(120)),
        (
            "MLP gradient check",
            c6_mlp_gradient,
            Duration::from_secs(30),
        ),
        (
            "zero-noise exactness",
            c7_zero_noise,
            Duration::from_secs(30),
        ),
        (
            "constrained trend",
            c8_constrained_trend,
            Duration::from_secs(600),
        ),
        (
            "Pareto recovery trend",
            c9_pareto_trend,
            Duration::from_secs(600),
        ),
        (
            "deterministic regression",
            c10_golden,
            Duration::from_secs(60),
        ),
        ("theorem_bound numerics", c11_bound, Duration::from_secs(1)),
    ];
    let mut failed = 0;
    for (i, (name, f, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *limit;
        let (status, detail) = match (&outcome, in_time) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("{d}; over the {limit:?} limit")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "criterion {:>2} {status} {name}: {detail} [{:.2} s]",
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of 11 criteria pass", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
