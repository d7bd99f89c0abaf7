use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qzlab::scenario::{self, parse_scenario_file, RunReport, Scenario, ScenarioError};

/// Run measurement-sequence scenarios and check their results.
#[derive(Debug, Parser)]
#[command(name = "qzlab", version)]
struct Cli {
    /// Override the seed of stochastic scenarios.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (per scenario for `verify`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario file.
    Run { file: PathBuf },
    /// Run every scenario in a directory and aggregate the checks.
    Verify { dir: PathBuf },
    /// Sweep the measurement interval over `sequence.deltas`.
    Sweep { file: PathBuf },
}

fn load(file: &Path, cli: &Cli) -> Result<Scenario, ScenarioError> {
    let mut s = parse_scenario_file(file)?;
    if let Some(seed) = cli.seed {
        s.override_seed(seed);
    }
    if let Some(out) = &cli.out {
        s.output.directory = out.clone();
    }
    Ok(s)
}

fn print_report(r: &RunReport) {
    println!("{} ({}) -> {}", r.scenario, r.kind, r.output_dir.display());
    for (k, v) in &r.metrics {
        println!("  {k} = {v}");
    }
    for c in &r.checks {
        let value = c.value.map_or("n/a".to_string(), |v| v.to_string());
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!(
            "  [{status}] {} = {value} (expected {})",
            c.metric, c.expectation
        );
    }
}

fn execute(cli: &Cli) -> Result<bool, ScenarioError> {
    match &cli.command {
        Command::Run { file } => {
            let report = scenario::run(&load(file, cli)?)?;
            print_report(&report);
            Ok(report.passed)
        }
        Command::Sweep { file } => {
            let report = scenario::run(&load(file, cli)?.into_sweep()?)?;
            print_report(&report);
            Ok(report.passed)
        }
        Command::Verify { dir } => {
            let summary = scenario::verify(dir, cli.out.as_deref(), cli.seed)?;
            for o in &summary.outcomes {
                match (&o.report, &o.error) {
                    (Some(r), _) => print_report(r),
                    (None, Some(e)) => println!("{}: error: {e}", o.path.display()),
                    (None, None) => unreachable!("outcome carries a report or an error"),
                }
            }
            let failed = summary.outcomes.iter().filter(|o| !o.passed()).count();
            println!("{} scenarios, {} failed", summary.outcomes.len(), failed);
            Ok(summary.passed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
