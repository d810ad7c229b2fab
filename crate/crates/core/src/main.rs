use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gradnorm_al::experiment::{cmd_check, cmd_plot, cmd_probe, cmd_run, exit_code, Overrides};
use gradnorm_al::Error;

/// Gradient-norm active learning experiments.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, replacing the config's.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run this seed only.
    #[arg(long)]
    seed: Option<u64>,
    /// Run this strategy only.
    #[arg(long)]
    strategy: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            strategy: self.strategy.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every strategy and seed, writing cycles.csv, selections.json and summary.json.
    Run(RunArgs),
    /// Run a single diagnostic and write probe_<name>.csv.
    Probe {
        #[command(flatten)]
        run: RunArgs,
        /// overlap, consistency, bounds, a2, decomposition or descent
        #[arg(long)]
        probe: String,
    },
    /// Render SVG charts from an artifact directory.
    Plot {
        /// Artifact directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the quick invariant suites.
    Check,
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(&e) as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match cmd_run(&args.config, &args.overrides()) {
            Ok(dir) => {
                println!("artifacts in {}", dir.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Probe { run, probe } => match cmd_probe(&run.config, &probe, &run.overrides()) {
            Ok(path) => {
                println!("wrote {}", path.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Plot { out } => match cmd_plot(&out) {
            Ok(files) => {
                for f in files {
                    println!("wrote {}", out.join(f).display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Check => {
            let results = cmd_check();
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if results.iter().all(|r| r.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
    }
}
