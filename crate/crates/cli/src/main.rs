//! Command-line driver for the kerrflow library.
//!
//! Every subcommand reads one TOML or JSON run configuration, evaluates the
//! sweep it describes and writes tables plus `manifest.json` to `--out`.
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 resource cap.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Context;
use config::RunConfig;
use output::{Manifest, OutDir, Tolerances};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] kerrflow::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn core_exit_code(e: &kerrflow::Error) -> u8 {
    use kerrflow::Error as E;
    match e {
        E::InvalidParameter(_) => 2,
        E::ResourceCap(_) => 4,
        E::Trajectory { source, .. } => core_exit_code(source),
        _ => 3,
    }
}

pub fn exit_code_for(e: &CliError) -> u8 {
    match e {
        CliError::Config(_) => 2,
        CliError::Core(c) => core_exit_code(c),
        CliError::Io(_) => 3,
    }
}

#[derive(Debug, Parser)]
#[command(name = "kerrflow", version, about = "Driven-dissipative Kerr resonator: classical flow, steady states, trajectories, chirality spectra")]
struct Cli {
    /// Run configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; overrides the configuration.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Base seed for trajectories; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Save trajectory batches to binary containers.
    #[arg(long, global = true)]
    save_trajectories: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Classify the classical flow over the (Δ, F̃) grid.
    PhaseDiagram,
    /// Steady states and photon numbers over the sweep.
    SteadyState,
    /// Steady-state Wigner functions and their maxima.
    Wigner,
    /// Trajectory ensembles, moments and jump statistics.
    Trajectories,
    /// Chirality spectra from trajectories and/or the Liouvillian.
    Chirality,
    /// Liouvillian eigenvalues, chirality weights and ζ maps.
    Liouvillian,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::PhaseDiagram => "phase-diagram",
            Command::SteadyState => "steady-state",
            Command::Wigner => "wigner",
            Command::Trajectories => "trajectories",
            Command::Chirality => "chirality",
            Command::Liouvillian => "liouvillian",
        }
    }
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let cfg = cfg.resolve()?;
    let workers = cfg.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    // a second initialization in the same process is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();

    let mut out = OutDir::create(&cli.out)?;
    let mut manifest = Manifest {
        command: cli.command.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        status: "running".into(),
        config: Some(cfg.clone()),
        workers,
        seed: cfg.seed,
        save_trajectories: cli.save_trajectories,
        tolerances: Some(Tolerances::from_config(&cfg)),
        outputs: Vec::new(),
        failures: Vec::new(),
    };
    out.write_manifest(&manifest)?;

    let mut ctx = Context { cfg: &cfg, out: &mut out, workers, seed: cfg.seed, save_trajectories: cli.save_trajectories };
    let result = match cli.command {
        Command::PhaseDiagram => commands::phase_diagram_cmd(&mut ctx),
        Command::SteadyState => commands::steady_state_cmd(&mut ctx),
        Command::Wigner => commands::wigner_cmd(&mut ctx),
        Command::Trajectories => commands::trajectories_cmd(&mut ctx),
        Command::Chirality => commands::chirality_cmd(&mut ctx),
        Command::Liouvillian => commands::liouvillian_cmd(&mut ctx),
    };
    manifest.outputs = out.outputs();
    let code = match result {
        Ok(failures) => {
            // worst per-point code; the run itself completed
            let code = failures.iter().map(|f| f.exit_code).max().unwrap_or(0);
            manifest.status = if failures.is_empty() { "ok" } else { "partial" }.into();
            manifest.failures = failures;
            code
        }
        Err(e) => {
            manifest.status = format!("failed: {e}");
            out.write_manifest(&manifest)?;
            return Err(e);
        }
    };
    out.write_manifest(&manifest)?;
    for f in &manifest.failures {
        eprintln!("point {}: {}", f.index, f.error);
    }
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
