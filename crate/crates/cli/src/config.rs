//! Resolution of flags, config file and defaults into one run configuration.
//!
//! Precedence is flag, then config file, then built-in default. The config
//! file is JSON with these optional keys:
//!
//! ```json
//! {
//!   "data": "path/to/dataset",
//!   "gen": {"classes": 3, "per_class": 150, "ood_shift": 2.0},
//!   "ood_class": 3,
//!   "seed": 0,
//!   "seeds": [0, 1, 2, 3, 4],
//!   "model": {"gamma": 0.5, "steps": 2, "alpha": 0.5, "m_in": -3.0, "hidden": 64, "epochs": 50, "lr": 0.001},
//!   "threshold": {"tau": 1.45, "tau_grid": "1:2:0.05", "tau_from": "val"}
//! }
//! ```
//!
//! A relative `data` path is resolved against the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use oodhg::data::{generate_synthetic, load_dataset, Dataset, SynthConfig};
use oodhg::metrics::GridSpec;
use oodhg::model::TrainConfig;
use oodhg::pipeline::{SweepSplit, TauSelection};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::args::{Common, ModelArgs, SynthArgs, TauArgs, TauFrom};

pub const DEFAULT_SEEDS: std::ops::Range<u64> = 0..5;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub gen: Option<SynthArgs>,
    pub ood_class: Option<usize>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub model: ModelArgs,
    #[serde(default)]
    pub threshold: TauArgs,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config file {}", path.display()))?;
        let mut config: FileConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))?;
        if let Some(data) = &config.data {
            if data.is_relative() {
                config.data = Some(path.parent().unwrap_or(Path::new(".")).join(data));
            }
        }
        Ok(config)
    }
}

impl SynthArgs {
    /// Fields set here win over `lower`.
    pub fn over(&self, lower: &SynthArgs) -> SynthArgs {
        SynthArgs {
            classes: self.classes.or(lower.classes),
            per_class: self.per_class.or(lower.per_class),
            aux_types: self.aux_types.or(lower.aux_types),
            aux_per_community: self.aux_per_community.or(lower.aux_per_community),
            feature_dim: self.feature_dim.or(lower.feature_dim),
            separation: self.separation.or(lower.separation),
            intra: self.intra.or(lower.intra),
            inter: self.inter.or(lower.inter),
            ood_shift: self.ood_shift.or(lower.ood_shift),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_none()
            && self.per_class.is_none()
            && self.aux_types.is_none()
            && self.aux_per_community.is_none()
            && self.feature_dim.is_none()
            && self.separation.is_none()
            && self.intra.is_none()
            && self.inter.is_none()
            && self.ood_shift.is_none()
    }

    pub fn resolve(&self, seed: u64) -> Result<SynthConfig> {
        let d = SynthConfig::default();
        let cfg = SynthConfig {
            n_id_classes: self.classes.unwrap_or(d.n_id_classes),
            nodes_per_class: self.per_class.unwrap_or(d.nodes_per_class),
            n_aux_types: self.aux_types.unwrap_or(d.n_aux_types),
            aux_per_community: self.aux_per_community.unwrap_or(d.aux_per_community),
            feature_dim: self.feature_dim.unwrap_or(d.feature_dim),
            class_separation: self.separation.unwrap_or(d.class_separation),
            intra_edge_prob: self.intra.unwrap_or(d.intra_edge_prob),
            inter_edge_prob: self.inter.unwrap_or(d.inter_edge_prob),
            ood_shift: self.ood_shift.unwrap_or(d.ood_shift),
            seed,
        };
        cfg.validate().context("invalid generator settings")?;
        Ok(cfg)
    }
}

impl ModelArgs {
    pub fn over(&self, lower: &ModelArgs) -> ModelArgs {
        ModelArgs {
            gamma: self.gamma.or(lower.gamma),
            steps: self.steps.or(lower.steps),
            alpha: self.alpha.or(lower.alpha),
            m_in: self.m_in.or(lower.m_in),
            hidden: self.hidden.or(lower.hidden),
            epochs: self.epochs.or(lower.epochs),
            lr: self.lr.or(lower.lr),
        }
    }

    pub fn resolve(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let mut c = TrainConfig {
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            epochs: self.epochs.unwrap_or(d.epochs),
            alpha: self.alpha.unwrap_or(d.alpha),
            m_in: self.m_in.unwrap_or(d.m_in),
            d_hidden: self.hidden.unwrap_or(d.d_hidden),
            ..d
        };
        c.propagation.gamma = self.gamma.unwrap_or(d.propagation.gamma);
        c.propagation.steps = self.steps.unwrap_or(d.propagation.steps);
        c.validate()
            .context("invalid model settings (--gamma, --steps, --alpha, --m-in, --hidden, --epochs, --lr)")?;
        Ok(c)
    }
}

impl TauArgs {
    pub fn over(&self, lower: &TauArgs) -> TauArgs {
        // an explicit threshold on either level replaces the whole sweep setting
        if self.tau.is_some() || (self.tau_grid.is_none() && self.tau_from.is_none() && lower.tau.is_some()) {
            return TauArgs {
                tau: self.tau.or(lower.tau),
                ..TauArgs::default()
            };
        }
        TauArgs {
            tau: None,
            tau_grid: self.tau_grid.clone().or_else(|| lower.tau_grid.clone()),
            tau_from: self.tau_from.or(lower.tau_from),
        }
    }

    pub fn resolve(&self) -> Result<TauSelection> {
        if let Some(t) = self.tau {
            return Ok(TauSelection::Fixed(t));
        }
        let grid = match &self.tau_grid {
            Some(text) => parse_grid(text).context("invalid --tau-grid")?,
            None => GridSpec::ENERGY.points(),
        };
        let split = match self.tau_from.unwrap_or(TauFrom::Val) {
            TauFrom::Val => SweepSplit::Val,
            TauFrom::Test => SweepSplit::Test,
        };
        Ok(TauSelection::Sweep { grid, split })
    }
}

/// `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let number = |s: &str| -> Result<f64> {
        let v: f64 = s.trim().parse().with_context(|| format!("`{s}` is not a number"))?;
        if !v.is_finite() {
            bail!("`{s}` is not finite");
        }
        Ok(v)
    };
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [start, stop, step] = parts[..] else {
            bail!("expected start:stop:step, got `{text}`");
        };
        let spec = GridSpec {
            start: number(start)?,
            stop: number(stop)?,
            step: number(step)?,
        };
        if spec.step <= 0.0 || spec.stop < spec.start {
            bail!("grid `{text}` needs step > 0 and stop >= start");
        }
        return Ok(spec.points());
    }
    let values = text.split(',').map(number).collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        bail!("empty grid");
    }
    Ok(values)
}

/// Comma list or half-open `start..end`; returned sorted and deduplicated.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let mut seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a
            .trim()
            .parse()
            .with_context(|| format!("bad range start in `{text}`"))?;
        let b: u64 = b.trim().parse().with_context(|| format!("bad range end in `{text}`"))?;
        (a..b).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<u64>().with_context(|| format!("`{s}` is not a seed")))
            .collect::<Result<_>>()?
    };
    seeds.sort_unstable();
    seeds.dedup();
    if seeds.is_empty() {
        bail!("no seeds in `{text}`");
    }
    Ok(seeds)
}

pub enum DataSource {
    Dir {
        path: PathBuf,
        dataset: Box<Dataset>,
    },
    /// One graph per seed, generated with the run seed.
    Synthetic(SynthArgs),
}

impl DataSource {
    pub fn resolve(common: &Common, file: &FileConfig) -> Result<Self> {
        let flags = &common.data;
        let synthetic = |lower: &SynthArgs| -> Result<Self> {
            let merged = flags.synth.over(lower);
            merged.resolve(0)?;
            Ok(DataSource::Synthetic(merged))
        };
        let dir = |path: &PathBuf| -> Result<Self> {
            if !flags.synth.is_empty() {
                bail!("generator flags such as --classes need --gen");
            }
            let dataset = load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))?;
            Ok(DataSource::Dir {
                path: path.clone(),
                dataset: Box::new(dataset),
            })
        };
        match (&flags.data, flags.gen, &file.data, &file.gen) {
            (Some(path), _, _, _) => dir(path),
            (None, true, _, gen) => synthetic(gen.as_ref().unwrap_or(&SynthArgs::default())),
            (None, false, Some(_), Some(_)) => bail!("config file sets both `data` and `gen`"),
            (None, false, Some(path), None) => dir(path),
            (None, false, None, Some(gen)) => synthetic(gen),
            (None, false, None, None) => bail!("no dataset: pass --data DIR or --gen"),
        }
    }

    pub fn dataset(&self, seed: u64) -> Result<Dataset> {
        match self {
            DataSource::Dir { dataset, .. } => Ok(dataset.as_ref().clone()),
            DataSource::Synthetic(args) => Ok(generate_synthetic(&args.resolve(seed)?)?),
        }
    }

    pub fn echo(&self) -> Value {
        match self {
            DataSource::Dir { path, .. } => json!({ "dir": path }),
            DataSource::Synthetic(args) => {
                let mut cfg =
                    serde_json::to_value(args.resolve(0).expect("validated on resolve")).expect("plain struct");
                // the generator seed is the run seed
                cfg.as_object_mut().expect("struct").remove("seed");
                json!({ "synthetic": cfg })
            }
        }
    }
}

pub fn ood_class(flag: Option<usize>, file: &FileConfig) -> Result<usize> {
    flag.or(file.ood_class)
        .context("missing --ood-class (or `ood_class` in the config file); the OOD label is never assumed")
}

pub fn seeds(flag: Option<&str>, file: &FileConfig) -> Result<Vec<u64>> {
    match (flag, &file.seeds) {
        (Some(text), _) => parse_seeds(text).context("invalid --seeds"),
        (None, Some(list)) if list.is_empty() => bail!("config file `seeds` is empty"),
        (None, Some(list)) => {
            let mut list = list.clone();
            list.sort_unstable();
            list.dedup();
            Ok(list)
        }
        (None, None) => Ok(DEFAULT_SEEDS.collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0.1:0.3:0.1").unwrap(), vec![0.1, 0.2, 0.3]);
        assert_eq!(parse_grid("1, 1.45").unwrap(), vec![1.0, 1.45]);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("a").is_err());
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4,1,4").unwrap(), vec![1, 4]);
        assert!(parse_seeds("3..3").is_err());
    }

    #[test]
    fn flags_win_over_file() {
        let flags = ModelArgs {
            gamma: Some(0.2),
            ..ModelArgs::default()
        };
        let file = ModelArgs {
            gamma: Some(0.9),
            steps: Some(4),
            ..ModelArgs::default()
        };
        let c = flags.over(&file).resolve().unwrap();
        assert_eq!(c.propagation.gamma, 0.2);
        assert_eq!(c.propagation.steps, 4);
        assert_eq!(c.epochs, TrainConfig::default().epochs);
    }

    #[test]
    fn explicit_tau_overrides_file_sweep() {
        let flags = TauArgs {
            tau: Some(1.45),
            ..TauArgs::default()
        };
        let file = TauArgs {
            tau_from: Some(TauFrom::Test),
            ..TauArgs::default()
        };
        assert_eq!(flags.over(&file).resolve().unwrap(), TauSelection::Fixed(1.45));
        let sweep = TauArgs::default().over(&file).resolve().unwrap();
        assert!(matches!(
            sweep,
            TauSelection::Sweep {
                split: SweepSplit::Test,
                ..
            }
        ));
    }
}
