use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dhgl::experiment::{
    cmd_bench, cmd_estimate, cmd_experiment, cmd_generate, format_bench_table, write_bench_csv,
    BenchConfig, EstimateConfig, EstimateInput, ExperimentConfig, Method,
};
use dhgl::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dhgl",
    version,
    about = "Hub-aware sparse precision matrix estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a truth network and per-replication samples.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate a precision matrix from a data or covariance CSV.
    Estimate {
        #[arg(long)]
        method: String,
        /// n x p data matrix.
        #[arg(long, conflicts_with = "covariance")]
        data: Option<PathBuf>,
        /// p x p covariance matrix; needs --n.
        #[arg(long, requires = "n")]
        covariance: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a simulation study and write metric tables.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Time the solvers over problem sizes.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

const EXIT_INPUT: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_FAILURE_RATE: u8 = 3;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn experiment_config(
    config: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let out = out
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::InvalidConfig {
            field: "output_dir".into(),
            reason: "give --out or output_dir".into(),
        })?;
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Generate { config, out, seed } => {
            let (cfg, out) = experiment_config(&config, out, seed)?;
            for path in cmd_generate(&cfg, &out)? {
                println!("{}", path.display());
            }
            Ok(0)
        }
        Command::Estimate {
            method,
            data,
            covariance,
            n,
            config,
            out,
        } => {
            let method: Method = method.parse()?;
            let input = match (data, covariance, n) {
                (Some(path), None, _) => EstimateInput::Data(path),
                (None, Some(path), Some(n)) => EstimateInput::Covariance { path, n },
                _ => {
                    return Err(Error::InvalidConfig {
                        field: "input".into(),
                        reason: "give --data, or --covariance with --n".into(),
                    })
                }
            };
            let cfg: EstimateConfig = match config {
                Some(path) => read_json(&path)?,
                None => EstimateConfig::default(),
            };
            let est = cmd_estimate(method, &input, &cfg, &out)?;
            println!(
                "{method}: {} iterations, converged {}, hubs {:?}",
                est.result.iterations, est.result.converged, est.hubs
            );
            Ok(if est.result.converged {
                0
            } else {
                EXIT_NOT_CONVERGED
            })
        }
        Command::Experiment {
            config,
            out,
            seed,
            jobs,
        } => {
            let (cfg, out) = experiment_config(&config, out, seed)?;
            let artifact = cmd_experiment(&cfg, &out, jobs)?;
            for m in &artifact.summary.methods {
                println!(
                    "{:>10}: ok {:>3} failed {:>3} sse {} correct_edges {}",
                    m.method,
                    m.runs_ok,
                    m.runs_failed,
                    m.sse.map_or("-".into(), |v| format!("{v:.4}")),
                    m.correct_edges.map_or("-".into(), |v| format!("{v:.2}")),
                );
            }
            if artifact.failure_rate_breached() {
                eprintln!(
                    "failure rate {:.1}% exceeds the limit",
                    100.0 * artifact.summary.failure_rate
                );
                return Ok(EXIT_FAILURE_RATE);
            }
            Ok(0)
        }
        Command::Bench { config, out, seed } => {
            let mut cfg: BenchConfig = match config {
                Some(path) => read_json(&path)?,
                None => BenchConfig::default(),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let rows = cmd_bench(&cfg)?;
            print!("{}", format_bench_table(&rows));
            if let Some(out) = out {
                std::fs::create_dir_all(&out)?;
                write_bench_csv(&out.join("bench.csv"), &rows)?;
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with 2 on usage errors, which is reserved for non-convergence
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_INPUT);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
