use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bernstein_rl::harness::{self, ExperimentConfig, ExperimentKind, Seeds};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bernstein-rl", version, about = "Variance-aware bandit and linear mixture MDP experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Weighted OFUL and OFUL on a linear bandit
    Bandit(RunArgs),
    /// UCRL-VTR+ and UCRL-VTR on an episodic linear mixture MDP
    Episodic(RunArgs),
    /// UCLK+ on a discounted linear mixture MDP
    Discounted(RunArgs),
    /// Monte Carlo coverage of the Bernstein confidence radius
    Concentration(RunArgs),
    /// Run the invariant suite
    Check,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seeds 0..N
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    base_seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads
    #[arg(long)]
    jobs: Option<usize>,
}

fn load(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            harness::parse_config(&text).with_context(|| format!("invalid config {}", path.display()))?
        }
        None => ExperimentConfig::default_for(kind),
    };
    if cfg.run.kind != kind {
        bail!("config is a {} experiment, not {}", cfg.run.kind.as_str(), kind.as_str());
    }
    if let Some(n) = args.seeds {
        cfg.run.seeds = Seeds::Count(n);
    }
    if let Some(s) = args.base_seed {
        cfg.run.base_seed = s;
    }
    Ok(cfg)
}

fn run(kind: ExperimentKind, args: &RunArgs) -> Result<ExitCode> {
    let cfg = load(kind, args)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.run.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results").join(kind.as_str()));
    let jobs = args.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let report = harness::run_suite(&cfg, jobs, &out)?;
    println!("fingerprint {}", report.fingerprint);
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    for f in &report.failures {
        eprintln!("seed {} ({}) failed: {}", f.seed, f.algorithm, f.message);
    }
    Ok(if report.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn check() -> ExitCode {
    let outcomes = harness::check_invariants();
    for c in &outcomes {
        println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if outcomes.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Bandit(a) => run(ExperimentKind::Bandit, a),
        Command::Episodic(a) => run(ExperimentKind::Episodic, a),
        Command::Discounted(a) => run(ExperimentKind::Discounted, a),
        Command::Concentration(a) => run(ExperimentKind::Concentration, a),
        Command::Check => Ok(check()),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
