//! `tbqkd` — simulate the injection-locked time-bin transmitter and compute
//! three-state secret key rates.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use commands::{CommandOutcome, ConfigError};
use config::RunConfig;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "tbqkd",
    about = "Injection-locked time-bin QKD transmitter simulator",
    version
)]
struct Cli {
    /// JSON configuration file; defaults embed the reference parameter set.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (falls back to config `out_dir`, then $TBQKD_OUT_DIR,
    /// then the working directory).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the transmitter pipeline and write the scenario trace and
    /// per-slot metrics.
    Simulate,
    /// Compute the secret key rate at one distance.
    Keyrate {
        /// Channel length (km); overrides the config.
        #[arg(long)]
        distance: Option<f64>,
    },
    /// Scan the key rate over a distance grid, for both source modes.
    Scan {
        /// First distance (km).
        #[arg(long, default_value_t = 0.0)]
        from: f64,
        /// Last distance (km).
        #[arg(long, default_value_t = 200.0)]
        to: f64,
        /// Grid step (km).
        #[arg(long, default_value_t = 1.0)]
        step: f64,
    },
    /// Run the bit-level protocol simulation and compare against the
    /// analytic channel model.
    Montecarlo {
        /// Number of pulses.
        #[arg(long)]
        pulses: Option<u64>,
        /// Reproducibility seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Channel length (km); overrides the config.
        #[arg(long)]
        distance: Option<f64>,
    },
}

fn resolve_out_dir(cli_dir: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    cli_dir
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os("TBQKD_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn run(cli: Cli) -> Result<CommandOutcome, ConfigError> {
    let cfg = RunConfig::load(cli.config.as_deref()).map_err(ConfigError)?;
    let out_dir = resolve_out_dir(cli.out_dir, &cfg);
    match cli.command {
        Command::Simulate => commands::cmd_simulate(&cfg, &out_dir),
        Command::Keyrate { distance } => commands::cmd_keyrate(&cfg, distance, &out_dir),
        Command::Scan { from, to, step } => commands::cmd_scan(&cfg, from, to, step, &out_dir),
        Command::Montecarlo {
            pulses,
            seed,
            distance,
        } => commands::cmd_montecarlo(&cfg, pulses, seed, distance, &out_dir),
    }
}

/// Die quietly when a downstream pipe closes, like other line-oriented
/// tools, instead of panicking on the failed print.
fn reset_sigpipe() {
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

fn main() {
    reset_sigpipe();
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            std::process::exit(outcome.exit_code);
        }
        Err(ConfigError(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
    }
}
