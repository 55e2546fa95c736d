use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wgqb_cli::commands::{cmd_coeffs, cmd_dynamics, cmd_scan, cmd_stability, cmd_validate};
use wgqb_cli::config::RunConfig;
use wgqb_cli::CliError;

#[derive(Parser)]
#[command(name = "wgqb", version, about = "Remote quantum-battery charging through a waveguide")]
struct Cli {
    /// TOML run configuration.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set phases.theta2=1.2`. Repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory (overrides output.directory).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// Also write SVG renderings.
    #[arg(long, global = true)]
    plot: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// SLH and closed-form master-equation coefficients.
    Coeffs,
    /// Energy and ergotropy traces from vacuum.
    Dynamics,
    /// Steady-state R, eta and zeta over a two-parameter grid.
    Scan,
    /// Drift eigenvalues and the quadratic-drive threshold.
    Stability,
    /// Truncated-Fock master equation against the moment equations.
    Validate {
        /// Permit drive amplitudes above the weak-drive limit.
        #[arg(long)]
        allow_strong_drive: bool,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut overrides = cli.set;
    if let Some(dir) = &cli.out {
        overrides.push(format!("output.directory={:?}", dir.display().to_string()));
    }
    if cli.plot {
        overrides.push("output.plots=true".into());
    }
    if let Command::Validate { allow_strong_drive: true } = cli.command {
        overrides.push("validate.allow_strong_drive=true".into());
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    let outcome = match cli.command {
        Command::Coeffs => cmd_coeffs(&cfg),
        Command::Dynamics => cmd_dynamics(&cfg),
        Command::Scan => cmd_scan(&cfg),
        Command::Stability => cmd_stability(&cfg),
        Command::Validate { .. } => cmd_validate(&cfg),
    }?;
    for f in &outcome.files {
        eprintln!("wrote {}", f.display());
    }
    Ok(outcome.report)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            // A closed pipe (e.g. `| head`) is not an error worth reporting.
            let _ = writeln!(std::io::stdout(), "{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("wgqb: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
