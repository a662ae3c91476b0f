//! `eitlock`: run EIT laser-lock scenarios and write CSV artifacts.
//!
//! Exit status is 0 on success, 2 for configuration errors and 1 for any
//! other failure; failures print a JSON error record on stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use eitlock::run::{run_scenario, RunManifest, Subcommand};
use eitlock::{Error, ScenarioConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    /// Doppler-averaged coupling-scan spectrum.
    Spectrum,
    /// Demodulated FM error signal and its carrier crossing.
    ErrorSignal,
    /// Closed-loop simulation and rms-over-slope linewidths.
    Lock,
    /// Beat note of two independent lasers and the Allan deviation.
    Beat,
    /// Cold-cloud spectrum fit for the residual laser linewidth.
    Fit,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Spectrum => Subcommand::Spectrum,
            Command::ErrorSignal => Subcommand::ErrorSignal,
            Command::Lock => Subcommand::Lock,
            Command::Beat => Subcommand::Beat,
            Command::Fit => Subcommand::Fit,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "eitlock",
    version,
    about = "Laser locking to Rydberg EIT: simulation and analysis"
)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Scenario file (TOML). Without it the built-in room-temperature
    /// scenario is used.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Root seed, overriding the scenario's.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory [default: outputs.dir from the scenario, else ./out]
    #[arg(long, value_name = "DIR", env = "EITLOCK_OUT")]
    out: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

fn load(path: Option<&Path>) -> eitlock::Result<ScenarioConfig> {
    match path {
        None => Ok(ScenarioConfig::desk_default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| Error::Io {
                path: p.to_path_buf(),
                source,
            })?;
            ScenarioConfig::from_toml(&text)
        }
    }
}

fn execute(cli: &Cli) -> eitlock::Result<RunManifest> {
    let mut config = load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.outputs.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    run_scenario(&config, cli.command.into(), &out)
}

fn error_record(e: &Error) -> serde_json::Value {
    let details = match e {
        Error::Config(list) => list.clone(),
        _ => Vec::new(),
    };
    serde_json::json!({
        "error": e.kind(),
        "message": e.to_string(),
        "details": details,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(manifest) => {
            if !cli.quiet {
                println!(
                    "{} digest={} seed={}",
                    manifest.subcommand, manifest.digest, manifest.seed
                );
                for (name, path) in &manifest.artifacts {
                    println!("  {name}: {}", path.display());
                }
                println!(
                    "{}",
                    serde_json::to_string_pretty(&manifest.summary).unwrap_or_default()
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::from(if matches!(e, Error::Config(_)) { 2 } else { 1 })
        }
    }
}
