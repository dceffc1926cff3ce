//! `csgd`: run, validate and analyse consensus SGD experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use csgd::diagnostics::RateFit;
use csgd::experiment::{self, ExperimentConfig, ExperimentError};
use csgd::Verdict;

#[derive(Parser)]
#[command(name = "csgd", version, about = "Consensus-based distributed SGD experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config file (`key = value` with `[section]` headers).
    config: PathBuf,
    /// Output directory (same as `--out=DIR` override).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds; each runs into `<out>/seed_<s>/`.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Config overrides as `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run(ConfigArgs),
    /// Check the schedule and mixing conditions without running.
    Validate(ConfigArgs),
    /// Tabulate error rates and pairwise deltas across runs.
    Compare {
        #[arg(required = true, num_args = 2..)]
        summaries: Vec<PathBuf>,
    },
    /// Fit the log-log decay rate of a metrics column.
    Ratefit {
        metrics: PathBuf,
        #[arg(long, default_value = "consensus_error")]
        column: String,
        #[arg(long)]
        kmin: Option<u64>,
        #[arg(long)]
        kmax: Option<u64>,
    },
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig, ExperimentError> {
    let mut overrides = args.overrides.clone();
    if let Some(out) = &args.out {
        overrides.push(format!("--out={}", out.display()));
    }
    ExperimentConfig::load(&args.config, &overrides)
}

fn dispatch(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = load(&args)?;
            if args.seeds.is_empty() {
                let summary = experiment::run_experiment(&cfg)?;
                for key in ["final_risk", "end_risk", "error_rate", "final_consensus_error", "wall_time_s"] {
                    if let Some(v) = summary.get(key) {
                        println!("{key} = {v}");
                    }
                }
            } else {
                experiment::run_seed_sweep(&cfg, &args.seeds)?;
                println!("wrote {}", cfg.out.join("sweep.csv").display());
            }
        }
        Command::Validate(args) => {
            let cfg = load(&args)?;
            let (_, report) = experiment::validate(&cfg)?;
            println!("{report}");
            if report.verdict() == Verdict::Fail {
                report.schedule.enforce(cfg.mode)?;
                if let Some(m) = &report.mixing {
                    m.enforce(cfg.mode)?;
                }
            }
        }
        Command::Compare { summaries } => {
            print!("{}", experiment::compare_runs(&summaries)?);
        }
        Command::Ratefit {
            metrics,
            column,
            kmin,
            kmax,
        } => {
            let window = match (kmin, kmax) {
                (None, None) => None,
                (lo, hi) => {
                    let series = experiment::read_metrics_column(&metrics, &column)?;
                    let last = series.last().map_or(0, |(k, _)| *k);
                    Some((lo.unwrap_or(last / 10), hi.unwrap_or(last)))
                }
            };
            let fit = experiment::ratefit(&metrics, &column, window)?;
            println!("{}", RateFit::CSV_HEADER);
            println!("{}", fit.csv_row(&column, 1));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
