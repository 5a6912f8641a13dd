use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use fire_core::benchmarks::theory::{run_theory_check, TheoryCheck};
use fire_core::benchmarks::{catalog, DEFAULT_RATIOS};
use fire_core::metrics::{ComparisonUnit, EloConfig, Metric};
use fire_mf::report::{write_report, Aggregation, ReportRequest};
use fire_mf::{run_experiment, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "fire-mf", version, about = "Multi-fidelity regression benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment grid described by a TOML file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Keep existing results and run only the missing cells.
        #[arg(long)]
        resume: bool,
        /// Overrides the configured worker count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Aggregate a results directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_parser = parse_metric, default_value = "nrmse")]
        metric: Metric,
        #[arg(long = "agg", value_parser = Aggregation::parse, default_value = "elo")]
        aggregation: Aggregation,
        /// Directory for the report files; defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "resgp")]
        anchor: String,
        #[arg(long, default_value_t = 1000.0)]
        anchor_value: f64,
        #[arg(long, default_value_t = 100)]
        rounds: usize,
        /// Compare per trial or per (problem, ratio) cell mean.
        #[arg(long, value_parser = parse_unit, default_value = "trial")]
        unit: ComparisonUnit,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Estimate conditional risks on synthetic residual processes.
    TheoryCheck {
        #[arg(long, value_parser = parse_check)]
        name: TheoryCheck,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the benchmark catalog.
    ListProblems,
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    Metric::parse(s).map_err(|e| e.to_string())
}

fn parse_check(s: &str) -> Result<TheoryCheck, String> {
    TheoryCheck::parse(s).map_err(|e| e.to_string())
}

fn parse_unit(s: &str) -> Result<ComparisonUnit, String> {
    match s {
        "trial" => Ok(ComparisonUnit::Trial),
        "cell-mean" => Ok(ComparisonUnit::CellMean),
        _ => Err(format!("unknown unit '{s}'; valid: trial, cell-mean")),
    }
}

fn list_problems() {
    println!("{:<20} {:>4} {:>3} {:>12}  high-fidelity sizes", "name", "dim", "T", "lower");
    for p in catalog() {
        let hf: Vec<String> = DEFAULT_RATIOS
            .iter()
            .map(|&r| p.hf_size(r).map(|n| n.to_string()).unwrap_or_else(|_| "-".into()))
            .collect();
        let lower: Vec<String> = p.lf_sizes.iter().map(|n| n.to_string()).collect();
        let noisy = if p.is_noisy() { "  noisy" } else { "" };
        println!("{:<20} {:>4} {:>3} {:>12}  {{{}}}{noisy}", p.name, p.dim, p.fidelities, lower.join("/"), hf.join(", "));
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run { config, resume, workers } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let s = run_experiment(&cfg, resume)?;
            println!(
                "{} cells, {} records written, {} already present, {} failed; results in {}",
                s.cells,
                s.written,
                s.skipped,
                s.failed,
                cfg.output.display()
            );
        }
        Command::Report {
            input,
            metric,
            aggregation,
            out,
            anchor,
            anchor_value,
            rounds,
            unit,
            seed,
        } => {
            let request = ReportRequest {
                metric,
                aggregation,
                elo: EloConfig {
                    anchor,
                    anchor_value,
                    bootstrap_rounds: rounds,
                    unit,
                    seed,
                },
            };
            let out = out.unwrap_or_else(|| input.clone());
            let files = write_report(&input, &out, &request)?;
            print!("{}", files.report.csv);
            eprintln!("wrote {} and {}", files.csv.display(), files.json.display());
        }
        Command::TheoryCheck { name, samples, seed } => {
            let report = run_theory_check(name, samples, seed).context("theory check failed to run")?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::ListProblems => list_problems(),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
