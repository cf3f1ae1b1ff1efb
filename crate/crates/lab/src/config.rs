//! Flag and config-file parameter sets.
//!
//! A config file is a flat TOML table whose keys are the long flag names of
//! the global options plus those of one subcommand. Flags given on the command
//! line take precedence over the file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Field-wise `self.or(file)`.
pub trait Merge {
    fn merge(self, file: Self) -> Self;
}

macro_rules! merge_impl {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl Merge for $ty {
            fn merge(self, file: Self) -> Self {
                Self { $($field: self.$field.or(file.$field)),* }
            }
        }
    };
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GlobalArgs {
    /// Output directory for data files and the run manifest.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel sweeps; 0 uses one per core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Flat TOML file with default values for any flag.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
merge_impl!(GlobalArgs { out, format, seed, workers, config });

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct BoundsArgs {
    /// Dimensions, comma separated. An empty value gives an empty sweep.
    #[arg(long, num_args = 0.., value_delimiter = ',')]
    pub d: Option<Vec<usize>>,
    /// Points per axis, comma separated.
    #[arg(long, num_args = 0.., value_delimiter = ',')]
    pub m: Option<Vec<usize>>,
    /// Scalar frequencies; in d dimensions each becomes `(w, …, w)`.
    #[arg(long, num_args = 0.., value_delimiter = ',', allow_negative_numbers = true)]
    pub omega: Option<Vec<i64>>,
    /// `product`, `constant:y`, `multitone:count,max_freq` or `alias:M`.
    #[arg(long = "fn")]
    #[serde(rename = "fn")]
    pub function: Option<String>,
    /// Precision systems: `exact`, `half`, `fp8clip`, `geom:a0,eps,T`.
    #[arg(long, num_args = 1..)]
    pub sys: Option<Vec<String>>,
    #[arg(long)]
    pub c2: Option<f64>,
}
merge_impl!(BoundsArgs { d, m, omega, function, sys, c2 });

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PlanArgs {
    /// Einsum equation; without one the bundled suite is planned.
    #[arg(long)]
    pub equation: Option<String>,
    /// Operand shapes such as `2x4x8x8,4x4x8x8`.
    #[arg(long)]
    pub shapes: Option<String>,
    #[arg(long)]
    pub sys: Option<String>,
    /// `all-real`, `pairwise-real`, `hybrid` or `hybrid:N`.
    #[arg(long)]
    pub lowering: Option<String>,
}
merge_impl!(PlanArgs { equation, shapes, sys, lowering });

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TaskArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// `none`, `tanh`, `clip`, `clip:c` or `twosigma`.
    #[arg(long)]
    pub stabilizer: Option<String>,
    #[arg(long)]
    pub lowering: Option<String>,
    /// Multiplies the task inputs.
    #[arg(long)]
    pub input_scale: Option<f64>,
}
merge_impl!(TaskArgs { d, m, n_train, n_test, steps, lr, momentum, depth, width, stabilizer, lowering, input_scale });

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    /// `full`, `mixed:<sys>` or `amp:<sys>`.
    #[arg(long)]
    pub mode: Option<String>,
    /// `default` or three fractions `mixed,amp,full`.
    #[arg(long)]
    pub schedule: Option<String>,
    /// Precision system used by the schedule.
    #[arg(long)]
    pub schedule_sys: Option<String>,
    /// Low-pass cutoff K.
    #[arg(long)]
    pub modes: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub task: TaskArgs,
}

impl Merge for TrainArgs {
    fn merge(self, file: Self) -> Self {
        Self {
            mode: self.mode.or(file.mode),
            schedule: self.schedule.or(file.schedule),
            schedule_sys: self.schedule_sys.or(file.schedule_sys),
            modes: self.modes.or(file.modes),
            task: self.task.merge(file.task),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModesArgs {
    /// Cutoffs K to compare.
    #[arg(long, num_args = 0.., value_delimiter = ',')]
    pub cutoffs: Option<Vec<usize>>,
    /// Precision modes to compare.
    #[arg(long, num_args = 1..)]
    pub precisions: Option<Vec<String>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub task: TaskArgs,
}

impl Merge for ModesArgs {
    fn merge(self, file: Self) -> Self {
        Self {
            cutoffs: self.cutoffs.or(file.cutoffs),
            precisions: self.precisions.or(file.precisions),
            task: self.task.merge(file.task),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SpectrumArgs {
    /// Number of seeds, starting at `--seed`.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub max_freq: Option<u32>,
    #[arg(long)]
    pub m: Option<usize>,
    /// Multiplies every tone amplitude; 0 gives a zero signal.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Run the aliasing demonstration instead of the tone study.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub alias: Option<bool>,
    /// Aliasing amplitude.
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub amplitude: Option<f64>,
    #[arg(long, num_args = 0.., value_delimiter = ',', allow_negative_numbers = true)]
    pub omega: Option<Vec<i64>>,
}
merge_impl!(SpectrumArgs { seeds, max_freq, m, scale, alias, amplitude, omega });

fn key_set<T: Serialize + Default>() -> BTreeSet<String> {
    match serde_json::to_value(T::default()) {
        Ok(serde_json::Value::Object(map)) => map.keys().cloned().collect(),
        _ => BTreeSet::new(),
    }
}

/// Parse a flat TOML document into the global and subcommand parameter sets,
/// rejecting keys that neither accepts.
pub fn parse_config<T>(text: &str) -> Result<(GlobalArgs, T)>
where
    T: Serialize + DeserializeOwned + Default,
{
    let table: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
    let global_keys = key_set::<GlobalArgs>();
    let local_keys = key_set::<T>();
    let mut global = toml::Table::new();
    let mut local = toml::Table::new();
    for (k, v) in table {
        if global_keys.contains(&k) {
            global.insert(k, v);
        } else if local_keys.contains(&k) {
            local.insert(k, v);
        } else {
            bail!("unknown config key `{k}`");
        }
    }
    let global: GlobalArgs = global.try_into().context("invalid global config value")?;
    let local: T = local.try_into().context("invalid config value")?;
    Ok((global, local))
}

pub fn load_config<T>(path: &Path) -> Result<(GlobalArgs, T)>
where
    T: Serialize + DeserializeOwned + Default,
{
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in config {}", path.display()))
}
