// SPDX-License-Identifier: Apache-2.0

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Context, Failure, Report};
use config::RunConfig;

/// Spectrum, flux sweeps, fitting and pulse simulations of a V-shape
/// artificial atom made of two inductively coupled transmons.
#[derive(Debug, Parser)]
#[command(name = "vshape", version)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Directory for output files (default: output.dir from the config, else ".").
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Replace the potential by its quadratic expansion (harmonic oracle).
    #[arg(long, global = true)]
    quadratic: bool,

    /// Seed for the eigensolver start vectors.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Energy scales, harmonic frequencies and the perturbative coupling.
    Energies,
    /// Converged spectrum, level labels and transitions at one flux bias.
    Spectrum {
        /// Also write the starting-grid Hamiltonian to operator.txt.
        #[arg(long)]
        dump_operator: bool,
    },
    /// Transition lines over a list of flux biases (sweep.csv).
    Sweep,
    /// Fit circuit parameters to measured lines.
    Fit {
        /// Line data CSV (overrides fit.data).
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
    },
    /// Pulsed conditional spectroscopy (pulse_trace.csv, pulse_dips.json).
    Pulse,
    /// Resonant Rabi oscillations and their decay time.
    Rabi,
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::usage("--config PATH is required"))?;
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let mut config: RunConfig =
        serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    if cli.quadratic {
        config.solver.quadratic = true;
    }
    if let Some(seed) = cli.seed {
        config.solver.eigen.seed = seed;
        config.fit.options.eigen.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output.dir = Some(out.clone());
    }
    config.resolve().map_err(Failure::usage)?;
    Ok(config)
}

fn run(cli: Cli) -> Result<Report, Failure> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    let config = load_config(&cli)?;
    let out_dir = config.output.dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let ctx = Context::new(config, out_dir);
    match cli.command {
        Command::Energies => commands::energies(ctx),
        Command::Spectrum { dump_operator } => commands::spectrum(ctx, dump_operator),
        Command::Sweep => commands::sweep(ctx),
        Command::Fit { data } => commands::fit_data(ctx, data),
        Command::Pulse => commands::pulse(ctx),
        Command::Rabi => commands::rabi(ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("reports serialize"));
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
