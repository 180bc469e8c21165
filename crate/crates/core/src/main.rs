use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lethal_chemotaxis::cli::{check_gates, parse_config, run, run_sweep_cmd, steady_states};
use lethal_chemotaxis::Error;

#[derive(Parser)]
#[command(
    version,
    about = "Chemorepulsion with lethal interaction: simulations, sweeps and checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (overrides the config file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the initial perturbation (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of field snapshots to write.
    #[arg(long, global = true)]
    snapshots: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write series, verdicts and snapshots.
    Simulate { config: PathBuf },
    /// Run a parameter sweep and write phase.csv.
    Sweep { spec: PathBuf },
    /// Print the gate reports without simulating.
    CheckGates { config: PathBuf },
    /// Print the homogeneous steady states.
    Equilibria { config: PathBuf },
}

fn execute(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Simulate { config } => {
            let mut config = parse_config(&config)?;
            if let Some(out) = cli.out {
                config.output.dir = out;
            }
            if let Some(seed) = cli.seed {
                config.initial.seed = seed;
            }
            if let Some(k) = cli.snapshots {
                config.output.snapshots = k;
            }
            let output = run(&config)?;
            for v in &output.report.verdicts {
                println!(
                    "{}: {} (margin {}) {}",
                    v.check,
                    if v.passed { "pass" } else { "fail" },
                    v.margin,
                    v.detail
                );
            }
            if let Some(g) = output.report.growth {
                eprintln!("{g}");
            }
            if let Some(msg) = &output.report.failure {
                eprintln!("solver failure: {msg}");
            }
            for note in &output.report.notes {
                println!("note: {note}");
            }
            Ok(output.exit_code)
        }
        Command::Sweep { spec } => {
            let out = cli.out.unwrap_or_else(|| PathBuf::from("."));
            let table = run_sweep_cmd(&spec, &out, cli.seed)?;
            println!(
                "{} points written to {}",
                table.len(),
                out.join("phase.csv").display()
            );
            Ok(0)
        }
        Command::CheckGates { config } => {
            for gate in check_gates(&parse_config(&config)?)? {
                println!("{gate}");
            }
            Ok(0)
        }
        Command::Equilibria { config } => {
            println!("{}", steady_states(&parse_config(&config)?)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
