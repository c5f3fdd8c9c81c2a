use std::path::PathBuf;
use std::process::ExitCode;

use adiaswitch::io::load_problem;
use adiaswitch::operator::{check_assumptions, unit_grid};
use clap::{Parser, Subcommand};

mod scenario;

use scenario::ScenarioError;

/// Caps the number of worker threads used for sweeps.
const WORKERS_ENV: &str = "ADIASWITCH_WORKERS";

#[derive(Parser)]
#[command(name = "adiaswitch", version, about = "Adiabatic switching experiments on Hermitian operator pairs")]
struct Cli {
    /// Print progress to stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write report.json plus CSV tables.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `outputDir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load a problem file and check the standing assumptions.
    Validate {
        #[arg(long)]
        problem: PathBuf,
    },
}

fn configure_workers() {
    if let Some(n) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        // a pool may already exist when embedded; the cap is best effort
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn run(config: PathBuf, out: Option<PathBuf>, verbose: bool) -> Result<bool, ScenarioError> {
    let (config, base) = scenario::load_config(&config)?;
    let dir = out.or_else(|| config.output_dir.clone()).unwrap_or_else(|| base.join("out"));
    let report = scenario::run(&config, verbose)?;
    scenario::write_outputs(&dir, config.experiment, &config.problem_path, &config.profile, &report)?;
    println!("{}: {}", if report.passed { "PASS" } else { "FAIL" }, dir.join("report.json").display());
    Ok(report.passed)
}

fn validate(path: PathBuf, verbose: bool) -> Result<bool, ScenarioError> {
    let problem = load_problem(&path).map_err(|e| ScenarioError::ProblemLoad(e.to_string()))?;
    let report = check_assumptions(&problem, &unit_grid(100), None)
        .map_err(|e| ScenarioError::ExperimentFailure(e.to_string()))?;
    println!("dimension {}, level E0 = {}, degeneracy {}", problem.dim(), problem.ground_energy(), problem.degeneracy());
    println!("first shifts {:?}", report.first_shifts);
    println!("minimal gap {:.6e} at lambda = {}", report.min_global_gap, report.min_global_gap_at);
    if verbose {
        println!(
            "degenerate level ok: {}, gap ok: {}, splitting ok: {}",
            report.degenerate_level_ok, report.gap_ok, report.splitting_ok
        );
    }
    println!("{}", if report.passed { "PASS" } else { "FAIL" });
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_workers();
    let outcome = match cli.command {
        Command::Run { config, out } => run(config, out, cli.verbose),
        Command::Validate { problem } => validate(problem, cli.verbose),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
