//! `romvel`: data synthesis, ROM construction, objective sweeps, inversion and
//! run comparison from JSON experiment configs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use romvel_core::experiment::{self, ExperimentConfig, Mode, RunManifest, MANIFEST_SCHEMA};
use romvel_core::{exec, Error, ErrorKind, Result};

#[derive(Parser)]
#[command(name = "romvel", version, about = "Velocity estimation with data-driven wave-operator ROMs")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Worker threads for the parallel loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed recorded in the run manifest (overrides the config's).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Common {
    /// Experiment config, or the manifest of an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Rom,
    Fwi,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize the measured data (and raw traces for time-stepped configs).
    Synthesize(Common),
    /// Build the data-driven ROM and its conditioning report.
    Rom {
        #[command(flatten)]
        common: Common,
        /// Data header written by `synthesize`; synthesized from the config if omitted.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Tabulate both objectives over a two-parameter two-layer sweep.
    Sweep(Common),
    /// Layer-stripping Gauss–Newton inversion.
    Invert {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Compare the velocity errors of two runs over the same true model.
    Compare {
        /// Run directory or manifest.
        run_a: PathBuf,
        run_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Config plus the manifest it came from, if any.
fn load(path: &Path, seed: Option<u64>) -> Result<(ExperimentConfig, Option<RunManifest>)> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let is_manifest = std::fs::read_to_string(path)
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v.get("schema").and_then(|s| s.as_str()).map(|s| s == MANIFEST_SCHEMA))
        .unwrap_or(false);
    let manifest = if is_manifest { Some(RunManifest::read(path)?) } else { None };
    Ok((cfg, manifest))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        exec::init_thread_pool(t)?;
    }
    let manifest = match cli.command {
        Cmd::Synthesize(c) => experiment::synthesize(&load(&c.config, cli.seed)?.0, &c.out)?,
        Cmd::Rom { common, data } => {
            let (cfg, from) = load(&common.config, cli.seed)?;
            let data = data.or_else(|| from.and_then(|m| m.inputs.data));
            experiment::build_rom(&cfg, data.as_deref(), &common.out)?
        }
        Cmd::Sweep(c) => experiment::sweep(&load(&c.config, cli.seed)?.0, &c.out)?,
        Cmd::Invert { common, mode } => {
            let (cfg, from) = load(&common.config, cli.seed)?;
            let mode = match mode {
                Some(ModeArg::Rom) => Mode::Rom,
                Some(ModeArg::Fwi) => Mode::Fwi,
                None => from.and_then(|m| m.mode).unwrap_or_default(),
            };
            experiment::invert(&cfg, mode, &common.out)?
        }
        Cmd::Compare { run_a, run_b, out } => experiment::compare(&run_a, &run_b, &out)?,
    };
    println!("{}", serde_json::to_string_pretty(&manifest.summary)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Numerical => 3,
                ErrorKind::Io => 4,
            })
        }
    }
}
