use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use optosq_cli::run::{cmd_simulate, cmd_sweep, threads_from_env};
use optosq_cli::{derive, CliError, CliResult, ScenarioConfig, REFERENCE_CONFIG};

/// Squeezing of a mechanical mirror by a modulated cavity drive.
#[derive(Parser)]
#[command(name = "optosq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate one scenario; writes trajectory.csv and summary.json.
    Simulate {
        /// Scenario file (JSON). The bundled reference scenario when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every value of the sweep block; writes point_NN/ and sweep_summary.csv.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print closed-form quantities and regime checks.
    Derive {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Print the bundled reference scenario.
    DefaultConfig,
}

fn load(path: Option<&Path>) -> CliResult<ScenarioConfig> {
    match path {
        Some(p) => ScenarioConfig::from_path(p),
        None => Ok(ScenarioConfig::reference()),
    }
}

fn run(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = load(config.as_deref())?;
            let summary = cmd_simulate(&cfg, &out)?;
            println!(
                "min var_opt {} at t = {} s ({:.3} dB); wrote {}",
                summary.min_variance,
                summary.t_at_min_s,
                summary.squeezing_db,
                out.display()
            );
            Ok(0)
        }
        Command::Sweep { config, out } => {
            let cfg = load(config.as_deref())?;
            let threads = threads_from_env()?;
            let outcome = cmd_sweep(&cfg, &out, threads)?;
            for row in &outcome.rows {
                println!(
                    "{:>12}  min {:<22} band {:<22} {}",
                    row.value, row.min_variance, row.steady_band_variance, row.status
                );
            }
            Ok(outcome.exit_code)
        }
        Command::Derive { config, json } => {
            let cfg = load(config.as_deref())?;
            let report = derive::derive(&cfg)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                print!("{report}");
            }
            Ok(0)
        }
        Command::DefaultConfig => {
            print!("{REFERENCE_CONFIG}");
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(CliError::exit_code(&e) as u8)
        }
    }
}
