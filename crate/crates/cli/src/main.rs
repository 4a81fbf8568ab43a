use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use trimode_cli::commands::{cmd_chi, cmd_decoherence, cmd_fit, cmd_spectrum, cmd_validate};
use trimode_cli::config::{Overrides, RunConfig};
use trimode_cli::CliError;

/// Simulator and fitting toolkit for a three-island superconducting circuit.
#[derive(Debug, Parser)]
#[command(name = "trimode", version)]
struct Args {
    /// TOML run configuration.
    #[arg(long, global = true, default_value = "trimode.toml")]
    config: PathBuf,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flux grid START:STOP:COUNT in units of the flux quantum.
    #[arg(long, global = true)]
    grid: Option<String>,
    /// Charge-basis cutoff per island.
    #[arg(long, global = true)]
    nmax: Option<usize>,
    /// Number of bootstrap samples for `fit` (0 disables).
    #[arg(long, global = true)]
    bootstrap: Option<usize>,
    /// Observation CSV for `fit`.
    #[arg(long, global = true)]
    observations: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact, effective and bare-effective branches versus flux.
    Spectrum,
    /// Dispersive shifts versus flux.
    Chi,
    /// Dephasing, Purcell and T2 limits versus flux.
    Decoherence,
    /// Fit circuit parameters to an observation file.
    Fit,
    /// Run the invariant suite.
    Validate,
}

fn run(args: Args) -> Result<(), CliError> {
    let overrides = Overrides {
        out: args.out,
        seed: args.seed,
        grid: args.grid,
        n_max: args.nmax,
        bootstrap: args.bootstrap,
        observations: args.observations,
    };
    let cfg = RunConfig::load(&args.config, &overrides)?;
    let written = match args.command {
        Command::Spectrum => cmd_spectrum(&cfg)?,
        Command::Chi => cmd_chi(&cfg)?,
        Command::Decoherence => cmd_decoherence(&cfg)?,
        Command::Fit => cmd_fit(&cfg)?,
        Command::Validate => {
            let (written, checks) = cmd_validate(&cfg)?;
            for c in &checks {
                println!("{}", c.line());
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(CliError::ChecksFailed(failed));
            }
            written
        }
    };
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("trimode: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
