//! Helpers shared by the integration tests: brute-force oracles written
//! straight from the gap definitions, random instance generators and the
//! fixed instances used by the trend checks.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mopx::linalg::Matrix;
use mopx::model::Instance;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `K×m` means in `[0, 1)`. A third of the draws are rounded to one
/// decimal so that ties and duplicate rows show up.
pub fn random_means(r: &mut ChaCha8Rng, k: usize, m: usize) -> Vec<Vec<f64>> {
    let coarse = r.random_range(0..3) == 0;
    (0..k)
        .map(|_| {
            (0..m)
                .map(|_| {
                    let v: f64 = r.random();
                    if coarse {
                        (v * 10.0).floor() / 10.0
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect()
}

pub fn matrix(rows: &[Vec<f64>]) -> Matrix<f64> {
    Matrix::from_rows(rows).unwrap()
}

// ---- oracle ---------------------------------------------------------------

fn weakly_above(u: &[f64], v: &[f64]) -> bool {
    u.iter().zip(v).all(|(a, b)| a >= b)
}

fn strictly_somewhere(u: &[f64], v: &[f64]) -> bool {
    u.iter().zip(v).any(|(a, b)| a > b)
}

pub fn oracle_front(points: &[Vec<f64>]) -> Vec<usize> {
    let mut out = Vec::new();
    'x: for (i, x) in points.iter().enumerate() {
        for y in points {
            if weakly_above(y, x) && strictly_somewhere(y, x) {
                continue 'x;
            }
        }
        out.push(i);
    }
    out
}

/// `m(x, y) = min_i (μ_i(y) − μ_i(x))`
fn small_m(x: &[f64], y: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..x.len() {
        best = best.min(y[i] - x[i]);
    }
    best
}

/// `M(x, y) = max_i (μ_i(x) − μ_i(y))`
fn big_m(x: &[f64], y: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for i in 0..x.len() {
        best = best.max(x[i] - y[i]);
    }
    best
}

/// Pareto gap of every arm; `f64::INFINITY` stands for an unbounded gap.
pub fn oracle_pareto_gaps(points: &[Vec<f64>]) -> Vec<f64> {
    let front = oracle_front(points);
    let k = points.len();
    let mut gaps = vec![f64::NAN; k];
    for x in 0..k {
        if front.contains(&x) {
            continue;
        }
        let mut g = f64::NEG_INFINITY;
        for &y in &front {
            g = g.max(small_m(&points[x], &points[y]));
        }
        gaps[x] = g;
    }
    for &x in &front {
        let mut plus = f64::INFINITY;
        for &y in &front {
            if y != x {
                plus = plus.min(big_m(&points[x], &points[y]).min(big_m(&points[y], &points[x])));
            }
        }
        let mut minus = f64::INFINITY;
        for y in 0..k {
            if !front.contains(&y) {
                minus = minus.min(big_m(&points[y], &points[x]).max(0.0) + gaps[y]);
            }
        }
        gaps[x] = plus.min(minus);
    }
    gaps
}

/// Constrained gaps and `x*`, or `None` when nothing is feasible.
pub fn oracle_constrained_gaps(points: &[Vec<f64>], tau: f64) -> Option<(usize, Vec<f64>)> {
    let mut star: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        if p[1] >= tau {
            match star {
                Some(s) if points[s][0] >= p[0] => {}
                _ => star = Some(i),
            }
        }
    }
    let s = star?;
    let cap = points[s][1] - tau;
    let gaps = points
        .iter()
        .map(|p| {
            let viol = if tau - p[1] > 0.0 { tau - p[1] } else { 0.0 };
            let subopt = points[s][0] - p[0];
            let delta = if viol > subopt { viol } else { subopt };
            if delta < cap {
                delta
            } else {
                cap
            }
        })
        .collect();
    Some((s, gaps))
}

// ---- statistics -----------------------------------------------------------

/// Mean and 95% normal CI half-width.
pub fn mean_ci(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// ---- fixed instances -------------------------------------------------------

/// Constrained linear instance with K=16, d=4, σ=0.5, τ=0.5 and min Δ=0.3.
/// Arm 0 is x* = (0.8, 0.8); five deceivers beat it on μ₁ but are
/// infeasible, five feasible arms trail it, five far arms fill the rest.
/// The first two feature coordinates are the means; the last two are
/// nuisance directions with zero weight.
pub fn trend_constrained() -> Instance<f64> {
    let mut mu: Vec<[f64; 2]> = vec![[0.8, 0.8]];
    for i in 0..5 {
        mu.push([0.9 + 0.1 * i as f64, 0.2]);
    }
    for i in 0..5 {
        mu.push([0.5, 0.6 + 0.1 * i as f64]);
    }
    for i in 0..5 {
        mu.push([0.1 + 0.05 * i as f64, 0.1 + 0.05 * i as f64]);
    }
    let features: Vec<Vec<f64>> = mu
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let a = 0.7 * i as f64;
            vec![m[0], m[1], 0.3 * a.sin(), 0.3 * a.cos()]
        })
        .collect();
    let theta = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]]).unwrap();
    Instance::linear(matrix(&features), theta, 0.5).unwrap()
}

/// Two-objective linear instance with K=30, d=2, σ=0.3. Three front arms,
/// each with nine dominated neighbours on a quarter circle of radius
/// 0.1·√2 below it. `μ = φθ` with θ = [[1, 0.2], [0.1, 0.9]].
pub fn trend_pareto() -> Instance<f64> {
    let peaks = [[0.95, 0.45], [0.8, 0.8], [0.45, 0.95]];
    let mut mu: Vec<[f64; 2]> = peaks.to_vec();
    let r = 0.1 * std::f64::consts::SQRT_2;
    for p in &peaks {
        for j in 0..9 {
            let a = std::f64::consts::FRAC_PI_2 * (j as f64 + 0.5) / 9.0;
            mu.push([p[0] - r * a.cos(), p[1] - r * a.sin()]);
        }
    }
    let theta = [[1.0, 0.2], [0.1, 0.9]];
    let det = theta[0][0] * theta[1][1] - theta[0][1] * theta[1][0];
    let inv = [
        [theta[1][1] / det, -theta[0][1] / det],
        [-theta[1][0] / det, theta[0][0] / det],
    ];
    let features: Vec<Vec<f64>> = mu
        .iter()
        .map(|m| {
            vec![
                m[0] * inv[0][0] + m[1] * inv[1][0],
                m[0] * inv[0][1] + m[1] * inv[1][1],
            ]
        })
        .collect();
    Instance::linear(matrix(&features), Matrix::from_rows(&theta).unwrap(), 0.3).unwrap()
}
