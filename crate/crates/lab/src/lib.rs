//! Command-line front end for the mpno-core sweeps and experiments.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use config::{load_config, BoundsArgs, Format, GlobalArgs, Merge, ModesArgs, PlanArgs, SpectrumArgs, TrainArgs};
pub use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "mpno-lab", version, about = "Finite-precision Fourier error and toy spectral operator lab")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Discretization and precision errors against their bounds.
    Bounds(BoundsArgs),
    /// Greedy and FLOP-optimal einsum plans side by side.
    Plan(PlanArgs),
    /// Train the toy spectral operator and record its trace.
    Train(TrainArgs),
    /// Half-precision error per tone frequency, or the aliasing demonstration.
    Spectrum(SpectrumArgs),
    /// Final test loss over mode cutoffs and precisions.
    Modes(ModesArgs),
}

/// Global options after merging flags, the config file and defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Globals {
    pub out: PathBuf,
    pub format: Format,
    pub seed: u64,
    pub workers: usize,
}

impl Globals {
    fn resolve(g: GlobalArgs) -> Self {
        Self {
            out: g.out.unwrap_or_else(|| PathBuf::from("out")),
            format: g.format.unwrap_or_default(),
            seed: g.seed.unwrap_or(1),
            workers: g.workers.unwrap_or(0),
        }
    }
}

fn merged<T>(global: GlobalArgs, args: T) -> Result<(Globals, T)>
where
    T: Merge + Serialize + DeserializeOwned + Default,
{
    let (global, args) = match &global.config {
        Some(path) => {
            let (fg, fa) = load_config::<T>(path)?;
            (global.merge(fg), args.merge(fa))
        }
        None => (global, args),
    };
    Ok((Globals::resolve(global), args))
}

/// Run a parsed command line and return the manifest it wrote.
pub fn run(cli: Cli) -> Result<RunManifest> {
    let global = cli.global;
    match cli.command {
        Command::Bounds(a) => {
            let (g, a) = merged(global, a)?;
            let cfg = commands::BoundsConfig::resolve(a, &g)?;
            in_pool(g.workers, || commands::bounds(&cfg, &g))
        }
        Command::Plan(a) => {
            let (g, a) = merged(global, a)?;
            let cfg = commands::PlanConfig::resolve(a)?;
            in_pool(g.workers, || commands::plan(&cfg, &g))
        }
        Command::Train(a) => {
            let (g, a) = merged(global, a)?;
            let cfg = commands::TrainRunConfig::resolve(a)?;
            in_pool(g.workers, || commands::train(&cfg, &g))
        }
        Command::Spectrum(a) => {
            let (g, a) = merged(global, a)?;
            let cfg = commands::SpectrumConfig::resolve(a)?;
            in_pool(g.workers, || commands::spectrum(&cfg, &g))
        }
        Command::Modes(a) => {
            let (g, a) = merged(global, a)?;
            let cfg = commands::ModesConfig::resolve(a)?;
            in_pool(g.workers, || commands::modes(&cfg, &g))
        }
    }
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().context("building worker pool")?;
    pool.install(f)
}
