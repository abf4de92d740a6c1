use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mopx::features::{pca_reduce, write_features, EmbeddingTable};
use mopx::gaps::{constrained_gaps, pareto_gaps};
use mopx::harness::{aggregate, render_table, run_experiment, write_outputs, ExperimentConfig};
use mopx::metrics::hypervolume;
use mopx::model::Instance;
use mopx::schedule::{make_schedule, SchedulerKind};
use mopx::{Error, Result};

#[derive(Parser)]
#[command(
    name = "mopx",
    version,
    about = "Fixed-budget multi-objective pure exploration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; 0 uses all cores.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Print a round plan as JSON.
    Schedule {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        budget: usize,
        #[arg(long, default_value = "sr")]
        scheduler: SchedulerKind,
    },
    /// Print the gap report of an instance as JSON.
    Gaps {
        #[arg(long)]
        instance: PathBuf,
        /// Feasibility threshold; gives constrained gaps instead of Pareto gaps.
        #[arg(long, allow_hyphen_values = true)]
        tau: Option<f64>,
    },
    /// Print the hypervolume of a point set.
    Hv {
        #[arg(long)]
        points: PathBuf,
        /// Comma-separated reference point; the origin by default.
        #[arg(long = "ref", allow_hyphen_values = true)]
        reference: Option<String>,
    },
    /// Reduce embeddings to PCA features.
    Features {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

fn to_json<S: serde::Serialize>(value: &S) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Parse(format!("json: {e}")))
}

fn parse_point(text: &str) -> std::result::Result<Vec<f64>, std::num::ParseFloatError> {
    text.split(',').map(|v| v.trim().parse()).collect()
}

/// Reads one point per line; a non-numeric first line is a header.
fn read_points(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read(path)?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_point(line) {
            Ok(p) => points.push(p),
            Err(_) if i == 0 => {}
            Err(e) => {
                return Err(Error::Parse(format!(
                    "{} line {}: {e}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(points)
}

/// Exit status of a successful command: 1 when some cells failed.
fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run { config, jobs, out } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let output = run_experiment(&cfg, jobs)?;
            let summary = aggregate(&output.records);
            write_outputs(&out, &output, &summary)?;
            print!("{}", render_table(&summary));
            if output.failures.is_empty() {
                Ok(0)
            } else {
                for f in &output.failures {
                    eprintln!("failed: {}: {}", f.run_id, f.error);
                }
                eprintln!(
                    "{} cell(s) failed; see {}",
                    output.failures.len(),
                    out.join("failures.csv").display()
                );
                Ok(1)
            }
        }
        Command::Schedule {
            k,
            budget,
            scheduler,
        } => {
            println!("{}", to_json(&make_schedule(scheduler, k, budget)?)?);
            Ok(0)
        }
        Command::Gaps { instance, tau } => {
            let inst = Instance::<f64>::from_json(&read(&instance)?)?;
            let report = match tau {
                Some(t) => constrained_gaps(inst.means(), t)?,
                None => pareto_gaps(inst.means()),
            };
            println!("{}", to_json(&report)?);
            Ok(0)
        }
        Command::Hv { points, reference } => {
            let pts = read_points(&points)?;
            let reference = match reference {
                Some(r) => parse_point(&r).map_err(|e| Error::Config(format!("--ref: {e}")))?,
                None => vec![0.0; pts.first().map_or(2, Vec::len)],
            };
            println!("{}", hypervolume(&pts, &reference)?);
            Ok(0)
        }
        Command::Features {
            embeddings,
            dim,
            out,
        } => {
            let file = std::fs::File::open(&embeddings).map_err(io_err(&embeddings))?;
            let pca = pca_reduce(&EmbeddingTable::<f64>::from_csv(file)?, dim)?;
            let file = std::fs::File::create(&out).map_err(io_err(&out))?;
            write_features(&pca.features, file)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            // Per-cell failures are reported above; anything reaching here
            // stopped the command before it could run.
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
