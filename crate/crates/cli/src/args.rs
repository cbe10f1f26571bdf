use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(
    name = "oodhg",
    version,
    about = "Energy-based OOD node detection on heterogeneous graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic dataset directory with a planted OOD class.
    Gen(GenArgs),
    /// Train one model and write checkpoint.json, history.json and splits.json.
    Train(TrainArgs),
    /// Score a dataset with a checkpoint and write metrics.json and scores.tsv.
    Eval(EvalArgs),
    /// Run the four component ablation arms over several seeds.
    Ablate(MultiArgs),
    /// Vary one hyperparameter over a grid, several seeds per value.
    Sweep(SweepArgs),
    /// Time meta-path composition against propagation over cached adjacencies.
    Bench(BenchArgs),
}

/// Generator settings. Every field is optional so that flags can override a
/// config file, which overrides the generator defaults.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthArgs {
    /// Number of in-distribution classes.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub aux_types: Option<usize>,
    #[arg(long)]
    pub aux_per_community: Option<usize>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// Norm of the in-distribution class means.
    #[arg(long)]
    pub separation: Option<f64>,
    /// Edge probability between a target node and its own class's community.
    #[arg(long, value_parser = probability)]
    pub intra: Option<f64>,
    /// Edge probability to any other community.
    #[arg(long, value_parser = probability)]
    pub inter: Option<f64>,
    /// How far OOD class means are pulled toward the origin.
    #[arg(long)]
    pub ood_shift: Option<f64>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArgs {
    /// Propagation keep weight, in (0, 1].
    #[arg(long, value_parser = gamma)]
    pub gamma: Option<f64>,
    /// Propagation steps k.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Weight of the classification loss; 1 disables the energy loss.
    #[arg(long, value_parser = probability)]
    pub alpha: Option<f64>,
    /// Energy-loss margin for in-distribution nodes.
    #[arg(long, allow_hyphen_values = true)]
    pub m_in: Option<f64>,
    #[arg(long, value_parser = positive_usize)]
    pub hidden: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    pub epochs: Option<usize>,
    #[arg(long, value_parser = positive_f64)]
    pub lr: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauFrom {
    Val,
    Test,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauArgs {
    /// Fixed threshold on -E; skips the sweep.
    #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["tau_grid", "tau_from"])]
    pub tau: Option<f64>,
    /// Threshold grid as `start:stop:step` or a comma list (default 1:2:0.05).
    #[arg(long)]
    pub tau_grid: Option<String>,
    /// Split the threshold sweep is scored on (default val).
    #[arg(long, value_enum)]
    pub tau_from: Option<TauFrom>,
}

#[derive(Args, Clone, Debug)]
pub struct DataArgs {
    /// Dataset directory.
    #[arg(long, conflicts_with = "gen")]
    pub data: Option<PathBuf>,
    /// Generate a synthetic dataset in memory, one per seed.
    #[arg(long)]
    pub gen: bool,
    #[command(flatten)]
    pub synth: SynthArgs,
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// JSON config file; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(flatten)]
    pub synth: SynthArgs,
    /// Also write splits.json with this OOD class, shuffled by --seed.
    #[arg(long)]
    pub ood_class: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::F32)]
    pub format: Format,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    F32,
    Csv,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Label treated as out-of-distribution.
    #[arg(long)]
    pub ood_class: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Label treated as out-of-distribution.
    #[arg(long)]
    pub ood_class: Option<usize>,
    #[command(flatten)]
    pub tau: TauArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// splits.json from training; otherwise the dataset's splits or fresh ones from --seed.
    #[arg(long)]
    pub splits: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MultiArgs {
    #[command(flatten)]
    pub common: Common,
    /// Label treated as out-of-distribution.
    #[arg(long)]
    pub ood_class: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub tau: TauArgs,
    /// Seeds as a comma list or `start..end` (default 0..5).
    #[arg(long)]
    pub seeds: Option<String>,
    /// Directory for the JSON report; the table is always printed.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SweepParam {
    Gamma,
    Steps,
    Alpha,
    MIn,
    Tau,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub multi: MultiArgs,
    /// Hyperparameter to vary.
    #[arg(long, value_enum)]
    pub sweep: SweepParam,
    /// Values as `start:stop:step` or a comma list; each parameter has a default.
    #[arg(long)]
    pub grid: Option<String>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    /// Step counts to time.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub k: Vec<usize>,
    #[arg(long, value_parser = gamma, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, value_parser = positive_usize, default_value_t = 7)]
    pub repeats: usize,
    /// Meta-paths to compose, comma separated (default: the dataset's propagation paths).
    #[arg(long, value_delimiter = ',')]
    pub paths: Vec<String>,
    /// Generator seed for --gen.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn probability(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn gamma(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1]"))
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(_) => Err(format!("`{s}` is not a positive integer")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn value_parsers() {
        assert!(gamma("0").is_err());
        assert_eq!(gamma("1").unwrap(), 1.0);
        assert!(probability("1.5").is_err());
        assert!(positive_usize("0").is_err());
        assert!(parse_f64("nan").is_err());
    }
}
