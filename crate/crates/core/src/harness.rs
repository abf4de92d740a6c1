//! Experiment sweeps: config parsing, seeded repetition over a grid of
//! algorithms × K × per-arm budget, metric records and 95% summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{
    check_pipeline, run, AlgorithmKind, EliminatorKind, GOptimalConfig, Mode, RunConfig, RunResult,
};
use crate::allocate::AllocatorKind;
use crate::env::{Brevity, EnvKind, GaussianEnv, LinearEnv, ReplayEnv, ReplayMode, ReplayTable};
use crate::error::{Error, Result};
use crate::estimate::{EstimatorKind, MlpConfig};
use crate::features::{pca_reduce, read_features, EmbeddingTable};
use crate::gaps::{best_feasible, pareto_front};
use crate::linalg::Matrix;
use crate::metrics::{hv_recovery, hypervolume, soft_constrained_reward, MetricRecord};
use crate::model::{ArmId, Environment, Instance};
use crate::schedule::SchedulerKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub kind: EnvKind,
    /// Instance JSON for gaussian and linear environments.
    #[serde(default)]
    pub instance: Option<PathBuf>,
    /// Replay CSV.
    #[serde(default)]
    pub fixture: Option<PathBuf>,
    #[serde(default)]
    pub replay_mode: ReplayMode,
    #[serde(default)]
    pub brevity: Option<Brevity>,
    /// Per-arm feature CSV for replay pipelines that need φ.
    #[serde(default)]
    pub features: Option<PathBuf>,
    /// Embedding CSV reduced by PCA to `pca_dim` features.
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    #[serde(default)]
    pub pca_dim: Option<usize>,
}

/// One algorithm column of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmSpec {
    /// Name used in outputs; defaults to the algorithm kind.
    pub label: Option<String>,
    pub algorithm: AlgorithmKind,
    /// Uniform baseline only; defaults to constrained when tau is set.
    pub mode: Option<Mode>,
    pub scheduler: SchedulerKind,
    pub allocator: AllocatorKind,
    pub estimator: EstimatorKind,
    pub eliminator: EliminatorKind,
    pub g_optimal: GOptimalConfig,
    pub mlp: MlpConfig,
    pub enforce_linear_budget: bool,
    pub redistribute_leftover: bool,
}

impl Default for AlgorithmSpec {
    fn default() -> Self {
        let base = RunConfig::new(AlgorithmKind::Gensec, 0, 0);
        AlgorithmSpec {
            label: None,
            algorithm: base.algorithm,
            mode: None,
            scheduler: base.scheduler,
            allocator: base.allocator,
            estimator: base.estimator,
            eliminator: base.eliminator,
            g_optimal: base.g_optimal,
            mlp: base.mlp,
            enforce_linear_budget: base.enforce_linear_budget,
            redistribute_leftover: base.redistribute_leftover,
        }
    }
}

impl AlgorithmSpec {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            match self.algorithm {
                AlgorithmKind::Gensec => "gensec",
                AlgorithmKind::Genpsi => "genpsi",
                AlgorithmKind::Uniform => "uniform",
            }
            .to_string()
        })
    }

    fn mode(&self, tau: Option<f64>) -> Mode {
        match self.algorithm {
            AlgorithmKind::Gensec => Mode::Constrained,
            AlgorithmKind::Genpsi => Mode::Pareto,
            AlgorithmKind::Uniform => self.mode.unwrap_or(if tau.is_some() {
                Mode::Constrained
            } else {
                Mode::Pareto
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSpec {
    pub per_arm: Vec<usize>,
}

impl Default for BudgetSpec {
    fn default() -> Self {
        BudgetSpec {
            per_arm: vec![3, 5, 8, 10],
        }
    }
}

/// Either a seed count (`0..n`) or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Count(u64),
    List(Vec<u64>),
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec::Count(20)
    }
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::Count(n) => (0..*n).collect(),
            SeedSpec::List(v) => v.clone(),
        }
    }
}

fn default_algorithms() -> Vec<AlgorithmSpec> {
    vec![AlgorithmSpec::default()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub environment: EnvironmentSpec,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<AlgorithmSpec>,
    /// Candidate-set sizes; each keeps the first K arms. Empty means all.
    #[serde(default, rename = "K")]
    pub k: Vec<usize>,
    #[serde(default)]
    pub budget: BudgetSpec,
    #[serde(default)]
    pub seeds: SeedSpec,
    #[serde(default)]
    pub tau: Option<f64>,
    /// Hypervolume reference point; the origin by default.
    #[serde(default)]
    pub reference: Option<Vec<f64>>,
    /// Relative paths resolve against this directory.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("experiment config: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms configured".into()));
        }
        if self.seeds.seeds().is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.budget.per_arm.is_empty() || self.budget.per_arm.contains(&0) {
            return Err(Error::Config(
                "per-arm budgets must be a non-empty list of values >= 1".into(),
            ));
        }
        let mut labels: Vec<String> = self.algorithms.iter().map(AlgorithmSpec::label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!(
                "algorithm label `{}` is used twice",
                w[0]
            )));
        }
        for spec in &self.algorithms {
            if spec.mode(self.tau) == Mode::Constrained && self.tau.is_none() {
                return Err(Error::Config(format!(
                    "algorithm `{}` is constrained and needs tau",
                    spec.label()
                )));
            }
            check_pipeline(spec.algorithm, spec.allocator, spec.estimator).map_err(
                |e| match e {
                    Error::Config(msg) => {
                        Error::Config(format!("algorithm `{}`: {msg}", spec.label()))
                    }
                    other => other,
                },
            )?;
        }
        let env = &self.environment;
        match env.kind {
            EnvKind::Gaussian | EnvKind::Linear if env.instance.is_none() => {
                return Err(Error::Config(
                    "gaussian and linear environments need an instance path".into(),
                ))
            }
            EnvKind::Replay if env.fixture.is_none() => {
                return Err(Error::Config(
                    "replay environments need a fixture path".into(),
                ))
            }
            _ => {}
        }
        if env.embeddings.is_some() && env.pca_dim.is_none() {
            return Err(Error::Config("embeddings need pca_dim".into()));
        }
        if let Some(b) = env.brevity {
            if b.tau_low >= b.tau_high {
                return Err(Error::Config("brevity needs tau_low < tau_high".into()));
            }
        }
        Ok(())
    }
}

/// Environment source loaded once and truncated per K.
#[derive(Debug, Clone)]
enum Source {
    Instance(EnvKind, Instance<f64>),
    Replay(ReplayTable<f64>, ReplayMode, Option<Matrix<f64>>),
}

impl Source {
    fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let spec = &cfg.environment;
        match spec.kind {
            EnvKind::Gaussian | EnvKind::Linear => {
                let path = cfg.resolve(spec.instance.as_ref().expect("validated"));
                let text = std::fs::read_to_string(&path).map_err(|source| Error::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                let instance = Instance::from_json(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                if spec.kind == EnvKind::Linear {
                    LinearEnv::new(instance.clone())?;
                }
                Ok(Source::Instance(spec.kind, instance))
            }
            EnvKind::Replay => {
                let path = cfg.resolve(spec.fixture.as_ref().expect("validated"));
                let table = ReplayTable::from_path(&path, spec.brevity)?;
                let features = match (&spec.features, &spec.embeddings) {
                    (Some(f), _) => {
                        let path = cfg.resolve(f);
                        let file = open(&path)?;
                        Some(read_features(file)?)
                    }
                    (None, Some(e)) => {
                        let path = cfg.resolve(e);
                        let table = EmbeddingTable::from_csv(open(&path)?)?;
                        Some(pca_reduce(&table, spec.pca_dim.expect("validated"))?.features)
                    }
                    (None, None) => None,
                };
                if let Some(f) = &features {
                    if f.nrows() != table.num_arms() {
                        return Err(Error::Config(format!(
                            "{} feature rows for {} replay arms",
                            f.nrows(),
                            table.num_arms()
                        )));
                    }
                }
                Ok(Source::Replay(table, spec.replay_mode, features))
            }
        }
    }

    fn num_arms(&self) -> usize {
        match self {
            Source::Instance(_, i) => i.num_arms(),
            Source::Replay(t, ..) => t.num_arms(),
        }
    }

    fn truncated(&self, k: usize) -> Result<Self> {
        Ok(match self {
            Source::Instance(kind, i) => Source::Instance(*kind, i.truncated(k)?),
            Source::Replay(t, mode, f) => {
                let f = f
                    .as_ref()
                    .map(|m| Matrix::from_rows(&m.to_rows()[..k]))
                    .transpose()?;
                Source::Replay(t.truncated(k)?, *mode, f)
            }
        })
    }

    /// A fresh environment (replay cursors start at zero).
    fn build(&self) -> Result<Box<dyn Environment<f64>>> {
        Ok(match self {
            Source::Instance(EnvKind::Linear, i) => Box::new(LinearEnv::new(i.clone())?),
            Source::Instance(_, i) => Box::new(GaussianEnv::new(i.clone())),
            Source::Replay(t, mode, f) => {
                let env = ReplayEnv::new(t.clone(), *mode);
                match f {
                    Some(f) => Box::new(env.with_features(f.clone())?),
                    None => Box::new(env),
                }
            }
        })
    }
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// One (algorithm, K, b, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub run_id: String,
    pub algorithm: usize,
    pub label: String,
    pub k: usize,
    pub b: usize,
    pub seed: u64,
}

/// Deterministic grid expansion: algorithms, then K, then b, then seeds.
pub fn expand_cells(cfg: &ExperimentConfig, full_k: usize) -> Vec<Cell> {
    let ks = if cfg.k.is_empty() {
        vec![full_k]
    } else {
        cfg.k.clone()
    };
    let seeds = cfg.seeds.seeds();
    let mut cells = Vec::new();
    for (ai, spec) in cfg.algorithms.iter().enumerate() {
        let label = spec.label();
        for &k in &ks {
            for &b in &cfg.budget.per_arm {
                for &seed in &seeds {
                    cells.push(Cell {
                        run_id: format!("{label}/K{k}/b{b}/s{seed}"),
                        algorithm: ai,
                        label: label.clone(),
                        k,
                        b,
                        seed,
                    });
                }
            }
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub run_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<MetricRecord>,
    pub failures: Vec<CellFailure>,
}

/// Ground truth for one K.
struct Truth {
    source: Source,
    means: Matrix<f64>,
    front: Vec<ArmId>,
    x_star: Option<ArmId>,
}

/// Runs every cell on `jobs` threads (0 picks the rayon default). Cell
/// failures are collected, not fatal; configuration problems that affect
/// the whole sweep are returned as errors.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let source = Source::load(cfg)?;
    let full_k = source.num_arms();
    let cells = expand_cells(cfg, full_k);

    let mut truths: BTreeMap<usize, Truth> = BTreeMap::new();
    for cell in &cells {
        if truths.contains_key(&cell.k) {
            continue;
        }
        if cell.k < 2 || cell.k > full_k {
            return Err(Error::Config(format!(
                "K={} is outside 2..={full_k}",
                cell.k
            )));
        }
        let source = source.truncated(cell.k)?;
        let means = source.build()?.means().clone();
        let x_star = match (cfg.tau, means.ncols()) {
            (Some(tau), 2) => best_feasible(&means, tau).ok(),
            _ => None,
        };
        let front = pareto_front(&means);
        truths.insert(
            cell.k,
            Truth {
                source,
                means,
                front,
                x_star,
            },
        );
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    info!(
        "running {} cells on {} threads",
        cells.len(),
        pool.current_num_threads()
    );
    let results: Vec<Result<Vec<MetricRecord>>> = pool.install(|| {
        cells
            .par_iter()
            .map(|c| run_cell(cfg, c, &truths[&c.k]))
            .collect()
    });

    let mut out = ExperimentOutput::default();
    for (cell, res) in cells.iter().zip(results) {
        match res {
            Ok(records) => out.records.extend(records),
            Err(e) => {
                warn!("cell {} failed: {e}", cell.run_id);
                out.failures.push(CellFailure {
                    run_id: cell.run_id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}

fn run_cell(cfg: &ExperimentConfig, cell: &Cell, truth: &Truth) -> Result<Vec<MetricRecord>> {
    let spec = &cfg.algorithms[cell.algorithm];
    let run_cfg = RunConfig {
        algorithm: spec.algorithm,
        mode: spec.mode(cfg.tau),
        scheduler: spec.scheduler,
        allocator: spec.allocator,
        estimator: spec.estimator,
        eliminator: spec.eliminator,
        budget: cell.b * cell.k,
        tau: cfg.tau,
        seed: cell.seed,
        run: 0,
        g_optimal: spec.g_optimal,
        mlp: spec.mlp,
        enforce_linear_budget: spec.enforce_linear_budget,
        redistribute_leftover: spec.redistribute_leftover,
    };
    let env = truth.source.build()?;
    let result = run(&run_cfg, env.as_ref())?;
    let values = cell_metrics(cfg, &run_cfg, &result, truth)?;
    Ok(values
        .into_iter()
        .map(|(metric, value, normalizer)| MetricRecord {
            run_id: cell.run_id.clone(),
            seed: cell.seed,
            algorithm: cell.label.clone(),
            k: cell.k,
            b: cell.b,
            metric: metric.to_string(),
            value,
            normalizer,
        })
        .collect())
}

type Scored = (&'static str, f64, Option<f64>);

fn cell_metrics(
    cfg: &ExperimentConfig,
    run_cfg: &RunConfig,
    result: &RunResult,
    truth: &Truth,
) -> Result<Vec<Scored>> {
    let mut out = Vec::new();
    let selected = result.selected.arms();
    match run_cfg.effective_mode() {
        Mode::Constrained => {
            let tau = cfg.tau.expect("validated");
            let arm = selected[0];
            let mu = truth.means.row(arm.index());
            let mu1_star = truth.x_star.map(|x| truth.means[(x.index(), 0)]);
            let (raw, _) = soft_constrained_reward(mu, tau, None)?;
            out.push(("soft_reward", raw, None));
            if let Some(star) = mu1_star.filter(|&s| s > 0.0) {
                let (_, norm) = soft_constrained_reward(mu, tau, Some(star))?;
                out.push((
                    "soft_reward_normalized",
                    norm.expect("normalizer given"),
                    Some(star),
                ));
            }
            if let Some(x) = truth.x_star {
                out.push(("misidentified", f64::from(u8::from(arm != x)), None));
            }
        }
        Mode::Pareto => {
            let reference = cfg
                .reference
                .clone()
                .unwrap_or_else(|| vec![0.0; truth.means.ncols()]);
            let rows: Vec<&[f64]> = selected
                .iter()
                .map(|a| truth.means.row(a.index()))
                .collect();
            out.push(("hypervolume", hypervolume(&rows, &reference)?, None));
            let truth_hv = {
                let rows: Vec<&[f64]> = truth
                    .front
                    .iter()
                    .map(|a| truth.means.row(a.index()))
                    .collect();
                hypervolume(&rows, &reference)?
            };
            if truth_hv > 0.0 {
                let rec = hv_recovery(&selected, &truth.front, &truth.means, &reference)?;
                out.push(("hv_recovery", rec, Some(truth_hv)));
            }
            out.push((
                "misidentified",
                f64::from(u8::from(selected != truth.front)),
                None,
            ));
        }
    }
    Ok(out)
}

/// Mean and 95% half-width of one (algorithm, K, b, metric) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub b: usize,
    pub metric: String,
    pub mean: f64,
    /// `1.96·s/√n` with the (n−1) variance; `None` for a single seed.
    pub ci_half_width: Option<f64>,
    pub n_seeds: usize,
}

/// Groups by (algorithm, K, b, metric), keeping first-appearance order of
/// algorithms and metrics. Values are summed in sorted order so the result
/// does not depend on record order.
pub fn aggregate(records: &[MetricRecord]) -> Vec<SummaryRow> {
    let mut algos: Vec<&str> = Vec::new();
    let mut metrics: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<(usize, usize, usize, usize), Vec<f64>> = BTreeMap::new();
    for r in records {
        let ai = position_or_push(&mut algos, &r.algorithm);
        let mi = position_or_push(&mut metrics, &r.metric);
        groups.entry((ai, r.k, r.b, mi)).or_default().push(r.value);
    }
    groups
        .into_iter()
        .map(|((ai, k, b, mi), mut values)| {
            values.sort_by(f64::total_cmp);
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let ci = (n >= 2).then(|| {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                1.96 * var.sqrt() / (n as f64).sqrt()
            });
            if ci.is_none() {
                warn!(
                    "{} K={k} b={b} {}: single seed, no confidence interval",
                    algos[ai], metrics[mi]
                );
            }
            SummaryRow {
                algorithm: algos[ai].to_string(),
                k,
                b,
                metric: metrics[mi].to_string(),
                mean,
                ci_half_width: ci,
                n_seeds: n,
            }
        })
        .collect()
}

fn position_or_push<'a>(list: &mut Vec<&'a str>, item: &'a str) -> usize {
    list.iter().position(|&x| x == item).unwrap_or_else(|| {
        list.push(item);
        list.len() - 1
    })
}

/// Formats with 6 significant digits, like C's `%.6g`.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i32;
    // Rounding can carry into the next decade (999999.5 → 1e6).
    let exp = if format!("{:.5e}", x).contains(&format!("e{}", exp + 1)) {
        exp + 1
    } else {
        exp
    };
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.5e}");
        let (mant, e) = s.split_once('e').expect("scientific format");
        let mant = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        format!("{mant}e{e}")
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

/// `run_id,seed,algorithm,K,b,metric,value`.
pub fn write_raw_csv<W: Write>(records: &[MetricRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run_id", "seed", "algorithm", "K", "b", "metric", "value"])
        .map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.run_id.clone(),
            r.seed.to_string(),
            r.algorithm.clone(),
            r.k.to_string(),
            r.b.to_string(),
            r.metric.clone(),
            r.value.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Parse(format!("csv: {e}")))
}

/// `algorithm,K,b,metric,mean,ci_half_width,n_seeds`, numbers at 6
/// significant digits, `NA` for a missing interval.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "algorithm",
        "K",
        "b",
        "metric",
        "mean",
        "ci_half_width",
        "n_seeds",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.algorithm.clone(),
            r.k.to_string(),
            r.b.to_string(),
            r.metric.clone(),
            format_sig6(r.mean),
            r.ci_half_width
                .map_or_else(|| "NA".to_string(), format_sig6),
            r.n_seeds.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Parse(format!("csv: {e}")))
}

pub fn read_summary_csv<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse()
                .map_err(|_| Error::Parse(format!("summary: bad number {:?}", field(i))))
        };
        let int = |i: usize| -> Result<usize> {
            field(i)
                .parse()
                .map_err(|_| Error::Parse(format!("summary: bad integer {:?}", field(i))))
        };
        rows.push(SummaryRow {
            algorithm: field(0).to_string(),
            k: int(1)?,
            b: int(2)?,
            metric: field(3).to_string(),
            mean: num(4)?,
            ci_half_width: if field(5) == "NA" {
                None
            } else {
                Some(num(5)?)
            },
            n_seeds: int(6)?,
        });
    }
    Ok(rows)
}

/// Plain-text tables, one per (metric, K): rows are algorithms, columns b.
pub fn render_table(rows: &[SummaryRow]) -> String {
    let mut metrics: Vec<&str> = Vec::new();
    let mut ks: Vec<usize> = Vec::new();
    let mut algos: Vec<&str> = Vec::new();
    let mut bs: Vec<usize> = Vec::new();
    for r in rows {
        position_or_push(&mut metrics, &r.metric);
        position_or_push(&mut algos, &r.algorithm);
        if !ks.contains(&r.k) {
            ks.push(r.k);
        }
        if !bs.contains(&r.b) {
            bs.push(r.b);
        }
    }
    ks.sort();
    bs.sort();

    let mut out = String::new();
    for metric in &metrics {
        for &k in &ks {
            let cell = |a: &str, b: usize| {
                rows.iter()
                    .find(|r| r.metric == *metric && r.k == k && r.b == b && r.algorithm == a)
                    .map(|r| match r.ci_half_width {
                        Some(ci) => format!("{:.4} ± {:.4}", r.mean, ci),
                        None => format!("{:.4}", r.mean),
                    })
                    .unwrap_or_else(|| "-".into())
            };
            if !algos.iter().any(|a| bs.iter().any(|&b| cell(a, b) != "-")) {
                continue;
            }
            let name_w = algos.iter().map(|a| a.len()).max().unwrap_or(0).max(6);
            let col_w = 17;
            let _ = writeln!(out, "{metric} (K={k})");
            let _ = write!(out, "{:<name_w$}", "method");
            for b in &bs {
                let _ = write!(out, "  {:>col_w$}", format!("b={b}"));
            }
            out.push('\n');
            for a in algos
                .iter()
                .filter(|a| bs.iter().any(|&b| cell(a, b) != "-"))
            {
                let _ = write!(out, "{a:<name_w$}");
                for &b in &bs {
                    let _ = write!(out, "  {:>col_w$}", cell(a, b));
                }
                out.push('\n');
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_failures_csv<W: Write>(failures: &[CellFailure], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run_id", "error"]).map_err(csv_err)?;
    for f in failures {
        w.write_record([&f.run_id, &f.error]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Parse(format!("csv: {e}")))
}

/// Writes `raw.csv`, `summary.csv`, `summary.txt` and, when cells failed,
/// `failures.csv` into `dir`.
pub fn write_outputs(dir: &Path, output: &ExperimentOutput, summary: &[SummaryRow]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let create = |name: &str| {
        let path = dir.join(name);
        std::fs::File::create(&path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    };
    write_raw_csv(&output.records, create("raw.csv")?)?;
    write_summary_csv(summary, create("summary.csv")?)?;
    create("summary.txt")?
        .write_all(render_table(summary).as_bytes())
        .map_err(|source| Error::Io {
            path: dir.join("summary.txt").display().to_string(),
            source,
        })?;
    if !output.failures.is_empty() {
        write_failures_csv(&output.failures, create("failures.csv")?)?;
    }
    Ok(())
}
