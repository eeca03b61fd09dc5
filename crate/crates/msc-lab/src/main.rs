use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use msc_lab::cli::{self, Overrides, PlotKind};
use msc_lab::scenario::builtins;

/// Matrix-scaled consensus laboratory: spectral analysis, protocol
/// simulation and verification for scaled-consensus networks.
#[derive(Parser)]
#[command(name = "msc-lab", version, about)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunOpts {
    /// Scenario file path or built-in name (see `builtins`).
    scenario: String,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `out/`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the integration step.
    #[arg(long)]
    h: Option<f64>,
    /// Override the horizon.
    #[arg(long, value_name = "T")]
    t_final: Option<f64>,
}

impl RunOpts {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, h: self.h, t_final: self.t_final }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a scenario, reporting any issues.
    Validate { scenario: String },
    /// Analyze the matrix-scaled Laplacian and write a spectral report.
    Spectral {
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Integrate the scenario and export the trajectory CSV.
    Simulate {
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Simulate and evaluate the scenario's declared checks.
    Check {
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run several seeds in parallel and summarize pass rates.
    Sweep {
        #[command(flatten)]
        opts: RunOpts,
        /// Number of consecutive seeds to run.
        #[arg(long, default_value_t = 8)]
        runs: usize,
    },
    /// Reshape trajectory CSVs into tidy long-format plot data.
    Plotdata {
        /// xy | component | norm | gains
        kind: PlotKind,
        /// Trajectory CSV files.
        files: Vec<PathBuf>,
        /// Output CSV path.
        #[arg(long, default_value = "plotdata.csv")]
        out: PathBuf,
    },
    /// List built-in scenarios.
    Builtins,
}

fn run(args: Args) -> Result<(), cli::CliError> {
    match args.command {
        Command::Validate { scenario } => cli::cmd_validate(&scenario),
        Command::Spectral { opts } => {
            let path = cli::cmd_spectral(&opts.scenario, opts.overrides(), opts.out.clone())?;
            println!("spectral report written to {}", path.display());
            Ok(())
        }
        Command::Simulate { opts } => {
            let path = cli::cmd_simulate(&opts.scenario, opts.overrides(), opts.out.clone())?;
            println!("trajectory written to {}", path.display());
            Ok(())
        }
        Command::Check { opts } => {
            let report = cli::cmd_check(&opts.scenario, opts.overrides(), opts.out.clone())?;
            for r in &report.results {
                println!(
                    "{}: {} = {:.6e} ({}, window {}) [{}]",
                    report.scenario,
                    r.name,
                    r.value,
                    r.threshold,
                    r.window,
                    if r.passed { "pass" } else { "FAIL" }
                );
            }
            if report.passed {
                Ok(())
            } else {
                Err(cli::CliError::CheckFailed)
            }
        }
        Command::Sweep { opts, runs } => {
            let out = opts.out.clone();
            let (path, passed) = cli::cmd_sweep(&opts.scenario, opts.overrides(), runs, out)?;
            println!("{passed}/{runs} seeds passed; summary at {}", path.display());
            if passed == runs {
                Ok(())
            } else {
                Err(cli::CliError::CheckFailed)
            }
        }
        Command::Plotdata { kind, files, out } => {
            if files.is_empty() {
                return Err(cli::CliError::BadArgument("no trajectory files given".into()));
            }
            cli::cmd_plotdata(kind, &files, &out)?;
            println!("plot data written to {}", out.display());
            Ok(())
        }
        Command::Builtins => {
            for name in builtins::names() {
                let file = builtins::by_name(name).expect("listed builtin exists");
                println!("{name}: {}", file.description);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
