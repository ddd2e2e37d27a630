//! `hhgq`: run, export and inspect quantum-optical HHG simulations.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 1 anything else (I/O, malformed artifacts).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hhg_core::config::parse_config;
use hhg_core::operators::{mott_gap, single_particle_bandwidth};
use hhg_core::pipeline::{export_figures_data, run_pipeline, MANIFEST_FILE};
use hhg_core::Error;

/// Relative output directories are placed under this directory when set.
const OUTPUT_ROOT_VAR: &str = "HHGQ_OUTPUT_ROOT";

#[derive(Parser)]
#[command(
    name = "hhgq",
    version,
    about = "Quantum-optical high-harmonic generation from a driven Hubbard chain"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) the pipeline described by a configuration file.
    Run { config: PathBuf },
    /// Write figure data from a finished run.
    Export { manifest: PathBuf },
    /// Parse and check a configuration without running it.
    Validate { config: PathBuf },
    /// Print the Mott gap and band width of the configured chain.
    Gap { config: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        e if e.is_config() => 2,
        Error::Numerical(_) => 3,
        _ => 1,
    }
}

fn output_root() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_ROOT_VAR)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Run { config } => {
            let cfg = parse_config(&config)?;
            let root = output_root();
            let manifest = run_pipeline(&cfg, root.as_deref())?;
            let dir = cfg.output_dir(root.as_deref());
            for s in &manifest.stages {
                println!("{:<9} {:?} {:.2}s {}", s.name, s.status, s.seconds, s.detail);
            }
            println!("manifest: {}", dir.join(MANIFEST_FILE).display());
        }
        Command::Export { manifest } => {
            let path = if manifest.is_dir() {
                manifest.join(MANIFEST_FILE)
            } else {
                manifest
            };
            for f in export_figures_data(&path)? {
                println!("{}", f.display());
            }
        }
        Command::Validate { config } => {
            let cfg = parse_config(&config)?;
            println!(
                "{}: ok ({} modes, path {})",
                config.display(),
                cfg.modes().len(),
                cfg.path.as_str()
            );
            print!("{}", cfg.to_text());
        }
        Command::Gap { config } => {
            let cfg = parse_config(&config)?;
            let wl = cfg.pulse.omega_l;
            let gap = mott_gap(&cfg.model)?;
            let band = single_particle_bandwidth(&cfg.model)?;
            println!("mott_gap = {:.6} omega_L ({:.8e} a.u.)", gap / wl, gap);
            println!("band_width = {:.6} omega_L ({:.8e} a.u.)", band / wl, band);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hhgq: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
