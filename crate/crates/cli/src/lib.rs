//! Batch runner: reads one TOML config, validates everything the chosen
//! command needs, runs it and writes the artifacts atomically into the
//! output directory together with the resolved config.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use nars_core::error::{Error, Result};

pub use config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Plane-wave harmonic growth
    Wave,
    /// Axisymmetric beam march with field dumps
    Kzk,
    /// Render a scenario to WAV
    Scene,
    /// Run the front end over a rendered scenario
    Frontend,
    /// SRP source localization
    Localize,
    /// Train the front-end tuning policy
    Train,
    /// Real-time-factor benchmark over a synthetic corpus
    Bench,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Wave => "wave",
            Command::Kzk => "kzk",
            Command::Scene => "scene",
            Command::Frontend => "frontend",
            Command::Localize => "localize",
            Command::Train => "train",
            Command::Bench => "bench",
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "nars", version, about = "Acoustic solvers, front end, scenes and tuning from config files")]
pub struct Manifest {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long = "config", value_name = "PATH")]
    pub config_path: PathBuf,
    #[arg(long = "out", value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Overrides the config's run seed.
    #[arg(long = "seed", value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for the commands that support them (train, localize).
    #[arg(long, value_name = "N", default_value_t = 1)]
    pub parallel: usize,
}

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

/// Reads and validates the config, with the seed override applied.
pub fn load(manifest: &Manifest) -> Result<RunConfig> {
    let text = std::fs::read_to_string(&manifest.config_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", manifest.config_path.display())))?;
    let mut cfg = RunConfig::from_toml(&text)?;
    if let Some(seed) = manifest.seed {
        cfg.seed = seed;
    }
    if manifest.parallel == 0 {
        return Err(Error::Config("--parallel must be at least 1".into()));
    }
    cfg.validate(manifest.command)?;
    Ok(cfg)
}

fn check_writable(dir: &Path) -> Result<()> {
    if dir.exists() && !dir.is_dir() {
        return Err(Error::Config(format!("{} is not a directory", dir.display())));
    }
    let mut probe = dir;
    while !probe.exists() {
        probe = match probe.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
    }
    let meta = std::fs::metadata(probe).map_err(|e| Error::Config(format!("{}: {e}", probe.display())))?;
    if meta.permissions().readonly() {
        return Err(Error::Config(format!("{} is not writable", probe.display())));
    }
    Ok(())
}

/// Runs one command end to end. Returns the summary lines that were printed.
pub fn run(manifest: &Manifest) -> Result<Vec<(String, String)>> {
    let cfg = load(manifest)?;
    check_writable(&manifest.out_dir)?;
    log::info!("running {} with {}", manifest.command.name(), manifest.config_path.display());
    let mut out = match manifest.command {
        Command::Wave => commands::wave(&cfg)?,
        Command::Kzk => commands::kzk(&cfg)?,
        Command::Scene => commands::scene(&cfg)?,
        Command::Frontend => commands::frontend(&cfg)?,
        Command::Localize => commands::localize(&cfg, manifest.parallel)?,
        Command::Train => commands::train(&cfg, manifest.parallel)?,
        Command::Bench => commands::bench(&cfg)?,
    };
    out.artifacts.add(RESOLVED_CONFIG, cfg.to_toml());
    let written = out.artifacts.commit(&manifest.out_dir)?;
    log::info!("wrote {} files to {}", written.len(), manifest.out_dir.display());
    Ok(out.summary)
}
