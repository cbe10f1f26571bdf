use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use oodhg::bench::{bench_propagation, BenchConfig};
use oodhg::checkpoint;
use oodhg::data::{make_splits, save_dataset, Dataset, FeatureFormat, Splits, DEFAULT_TRAIN_FRAC, DEFAULT_VAL_FRAC};
use oodhg::graph::MetaPath;
use oodhg::metrics::GridSpec;
use oodhg::model::{self, TrainConfig};
use oodhg::pipeline::{
    evaluate, run_once, scores_tsv, Arm, DetectionMetrics, MeanStd, MetricSummary, MetricsReport, RunOutcome, RunPlan,
    TauSelection,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{BenchArgs, EvalArgs, Format, GenArgs, MultiArgs, SweepArgs, SweepParam, TrainArgs};
use crate::config::{self, parse_grid, DataSource, FileConfig};

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(dir, name, &text)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn plan(dataset: &Dataset, ood_class: usize, tau: &TauSelection) -> RunPlan {
    RunPlan {
        tau: tau.clone(),
        ..RunPlan::for_dataset(dataset, ood_class)
    }
}

pub fn gen(args: GenArgs) -> Result<()> {
    if args.out.exists() {
        let mut entries = fs::read_dir(&args.out).with_context(|| format!("reading {}", args.out.display()))?;
        ensure!(
            entries.next().is_none(),
            "output directory {} is not empty",
            args.out.display()
        );
    }
    let cfg = args.synth.resolve(args.seed)?;
    let mut dataset = oodhg::data::generate_synthetic(&cfg)?;
    if let Some(ood) = args.ood_class {
        dataset.splits = Some(
            make_splits(&dataset.labels, ood, DEFAULT_TRAIN_FRAC, DEFAULT_VAL_FRAC, args.seed)
                .with_context(|| format!("splitting with --ood-class {ood}"))?,
        );
    }
    let format = match args.format {
        Format::F32 => FeatureFormat::F32,
        Format::Csv => FeatureFormat::Csv,
    };
    save_dataset(&dataset, &args.out, format)?;
    println!(
        "wrote {} target nodes ({} ID classes + OOD class {}), {} edges to {}",
        dataset.labels.len(),
        cfg.n_id_classes,
        cfg.ood_class(),
        dataset.graph.edge_count(),
        args.out.display()
    );
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let source = DataSource::resolve(&args.common, &file)?;
    let ood = config::ood_class(args.ood_class, &file)?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let config = TrainConfig {
        seed,
        ..args.model.over(&file.model).resolve()?
    };
    let dataset = source.dataset(seed)?;
    let splits = dataset
        .splits_or_make(ood, seed)
        .with_context(|| format!("splitting with --ood-class {ood}"))?;
    let (model, history) = model::train(
        &dataset.graph,
        &dataset.labels,
        &splits,
        &dataset.feature_paths(),
        &dataset.propagation_paths(),
        &config,
    )
    .context("training")?;

    let echo = json!({
        "command": "train",
        "data": source.echo(),
        "ood_class": ood,
        "seed": seed,
        "train": config,
    });
    create_dir(&args.out)?;
    checkpoint::save(&model, args.out.join("checkpoint.json"))?;
    write_json(
        &args.out,
        "history.json",
        &json!({
            "config": echo,
            "best_epoch": history.best_epoch,
            "initial": history.initial,
            "records": history.records,
        }),
    )?;
    let mut splits_json = serde_json::to_string(&splits)?;
    splits_json.push('\n');
    write_file(&args.out, "splits.json", &splits_json)?;

    let best = &history.records[history.best_epoch - 1];
    println!(
        "trained {} epochs; best epoch {} (val micro-F1 {:.4}); mean train energy {:.4} -> {:.4}",
        config.epochs,
        history.best_epoch,
        best.val_micro_f1,
        history.initial.mean_train_energy,
        history.records.last().map_or(f64::NAN, |r| r.mean_train_energy),
    );
    println!(
        "wrote checkpoint.json, history.json, splits.json to {}",
        args.out.display()
    );
    Ok(())
}

fn read_splits(path: &Path, labels: &[usize]) -> Result<Splits> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let splits: Splits = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    splits
        .validate(labels)
        .with_context(|| format!("splits in {} do not fit the dataset", path.display()))?;
    Ok(splits)
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let source = DataSource::resolve(&args.common, &file)?;
    let model = checkpoint::load(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let ood = args.ood_class.or(file.ood_class).unwrap_or(model.label_map.ood_class);
    ensure!(
        ood == model.label_map.ood_class,
        "--ood-class {ood} does not match the checkpoint's OOD class {}",
        model.label_map.ood_class
    );
    let seed = args.seed.or(file.seed).unwrap_or(model.config.seed);
    let tau = args.tau.over(&file.threshold).resolve()?;
    let dataset = source.dataset(seed)?;
    let splits = match &args.splits {
        Some(path) => read_splits(path, &dataset.labels)?,
        None => dataset
            .splits_or_make(ood, seed)
            .with_context(|| format!("splitting with --ood-class {ood}"))?,
    };
    let echo = json!({
        "command": "eval",
        "checkpoint": args.checkpoint,
        "data": source.echo(),
        "ood_class": ood,
        "seed": seed,
        "tau": tau,
        "train": model.config,
    });
    let evaluation = evaluate(&dataset.graph, &dataset.labels, &splits, &model, &tau, echo)
        .with_context(|| format!("evaluating {}", args.checkpoint.display()))?;

    create_dir(&args.out)?;
    write_file(&args.out, "metrics.json", &evaluation.report.to_json()?)?;
    write_file(
        &args.out,
        "scores.tsv",
        &scores_tsv(&evaluation, &splits, &dataset.labels, &model),
    )?;
    let r = &evaluation.report;
    println!(
        "AUROC {:.4}  AUPR {:.4}  FPR@95 {:.4}  micro-F1 {:.4}  macro-F1 {:.4}  tau {}",
        r.auroc, r.aupr, r.fpr95, r.micro_f1, r.macro_f1, r.tau
    );
    println!(
        "baselines on the same nodes: raw energy AUROC {:.4}, MSP AUROC {:.4}",
        evaluation.raw_energy.auroc, evaluation.msp.auroc
    );
    println!("wrote metrics.json, scores.tsv to {}", args.out.display());
    Ok(())
}

/// One seed's headline numbers.
#[derive(Clone, Debug, Serialize)]
struct RunRow {
    seed: u64,
    auroc: f64,
    aupr: f64,
    fpr95: f64,
    micro_f1: f64,
    macro_f1: f64,
    tau: f64,
}

impl RunRow {
    fn new(seed: u64, r: &MetricsReport) -> Self {
        Self {
            seed,
            auroc: r.auroc,
            aupr: r.aupr,
            fpr95: r.fpr95,
            micro_f1: r.micro_f1,
            macro_f1: r.macro_f1,
            tau: r.tau,
        }
    }

    fn summarize(rows: &[RunRow]) -> MetricSummary {
        let pick = |f: fn(&RunRow) -> f64| MeanStd::of(&rows.iter().map(f).collect::<Vec<_>>());
        MetricSummary {
            auroc: pick(|r| r.auroc),
            aupr: pick(|r| r.aupr),
            fpr95: pick(|r| r.fpr95),
            micro_f1: pick(|r| r.micro_f1),
            macro_f1: pick(|r| r.macro_f1),
        }
    }
}

#[derive(Serialize)]
struct DetectionSummary {
    auroc: MeanStd,
    aupr: MeanStd,
    fpr95: MeanStd,
}

impl DetectionSummary {
    fn of(runs: &[DetectionMetrics]) -> Self {
        let pick = |f: fn(&DetectionMetrics) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>());
        Self {
            auroc: pick(|m| m.auroc),
            aupr: pick(|m| m.aupr),
            fpr95: pick(|m| m.fpr95),
        }
    }
}

fn cell(s: MeanStd) -> String {
    format!("{:.4} ± {:.4}", s.mean, s.std)
}

fn print_header(first: &str) {
    println!(
        "{first:<16} {:<16} {:<16} {:<16} {:<16} {:<16}",
        "AUROC", "AUPR", "FPR@95", "micro-F1", "macro-F1"
    );
}

fn print_row(label: &str, s: &MetricSummary) {
    println!(
        "{label:<16} {:<16} {:<16} {:<16} {:<16} {:<16}",
        cell(s.auroc),
        cell(s.aupr),
        cell(s.fpr95),
        cell(s.micro_f1),
        cell(s.macro_f1)
    );
}

struct MultiSetup {
    source: DataSource,
    ood: usize,
    seeds: Vec<u64>,
    base: TrainConfig,
    tau: TauSelection,
    echo: Value,
}

fn multi_setup(args: &MultiArgs, command: &str) -> Result<MultiSetup> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let source = DataSource::resolve(&args.common, &file)?;
    let ood = config::ood_class(args.ood_class, &file)?;
    let seeds = config::seeds(args.seeds.as_deref(), &file)?;
    let base = args.model.over(&file.model).resolve()?;
    let tau = args.tau.over(&file.threshold).resolve()?;
    let echo = json!({
        "command": command,
        "data": source.echo(),
        "ood_class": ood,
        "seeds": seeds,
        "tau": tau,
        "train": base,
    });
    Ok(MultiSetup {
        source,
        ood,
        seeds,
        base,
        tau,
        echo,
    })
}

pub fn ablate(args: MultiArgs) -> Result<()> {
    let setup = multi_setup(&args, "ablate")?;
    // per seed: one outcome per arm, in Arm::ALL order
    let per_seed: Vec<Vec<RunOutcome>> = setup
        .seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<RunOutcome>> {
            let dataset = setup.source.dataset(seed)?;
            let plan = plan(&dataset, setup.ood, &setup.tau);
            Arm::ALL
                .iter()
                .map(|arm| {
                    let config = arm.config(&TrainConfig {
                        seed,
                        ..setup.base.clone()
                    });
                    run_once(&dataset, &plan, &config, Value::Null).with_context(|| format!("seed {seed}, arm {arm}"))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut arms = Vec::new();
    print_header("arm");
    for (a, arm) in Arm::ALL.iter().enumerate() {
        let runs: Vec<RunRow> = setup
            .seeds
            .iter()
            .zip(&per_seed)
            .map(|(&seed, outcomes)| RunRow::new(seed, &outcomes[a].evaluation.report))
            .collect();
        let summary = RunRow::summarize(&runs);
        print_row(arm.name(), &summary);
        let config = arm.config(&setup.base);
        arms.push(json!({
            "arm": arm.name(),
            "alpha": config.alpha,
            "steps": config.propagation.steps,
            "summary": summary,
            "runs": runs,
        }));
    }
    let full = Arm::ALL.iter().position(|a| *a == Arm::Full).expect("full arm");
    let msp: Vec<DetectionMetrics> = per_seed.iter().map(|o| o[full].evaluation.msp).collect();
    let msp_summary = DetectionSummary::of(&msp);
    println!(
        "{:<16} {:<16} {:<16} {:<16}",
        "MSP baseline",
        cell(msp_summary.auroc),
        cell(msp_summary.aupr),
        cell(msp_summary.fpr95)
    );

    if let Some(out) = &args.out {
        create_dir(out)?;
        write_json(
            out,
            "ablation.json",
            &json!({ "config": setup.echo, "arms": arms, "msp_baseline": msp_summary }),
        )?;
        println!("wrote ablation.json to {}", out.display());
    }
    Ok(())
}

fn default_grid(param: SweepParam) -> Vec<f64> {
    let spec = |start, stop, step| GridSpec { start, stop, step }.points();
    match param {
        SweepParam::Gamma => spec(0.1, 0.9, 0.1),
        SweepParam::Steps => (0..=8).map(f64::from).collect(),
        SweepParam::Alpha => spec(0.1, 1.0, 0.1),
        SweepParam::MIn => spec(-5.0, -1.0, 0.5),
        SweepParam::Tau => GridSpec::ENERGY.points(),
    }
}

fn with_value(base: &TrainConfig, param: SweepParam, value: f64) -> Result<TrainConfig> {
    let mut c = base.clone();
    match param {
        SweepParam::Gamma => c.propagation.gamma = value,
        SweepParam::Steps => {
            ensure!(
                value >= 0.0 && value.fract() == 0.0,
                "--grid value {value} is not a step count"
            );
            c.propagation.steps = value as usize;
        }
        SweepParam::Alpha => c.alpha = value,
        SweepParam::MIn => c.m_in = value,
        SweepParam::Tau => {}
    }
    c.validate().with_context(|| format!("--grid value {value}"))?;
    Ok(c)
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let param = args.sweep;
    let tau_flags = &args.multi.tau;
    if param == SweepParam::Tau && (tau_flags.tau.is_some() || tau_flags.tau_grid.is_some()) {
        bail!("--sweep tau takes its values from --grid, not --tau or --tau-grid");
    }
    let setup = multi_setup(&args.multi, "sweep")?;
    let grid = match &args.grid {
        Some(text) => parse_grid(text).context("invalid --grid")?,
        None => default_grid(param),
    };
    let configs: Vec<TrainConfig> = grid
        .iter()
        .map(|&v| with_value(&setup.base, param, v))
        .collect::<Result<_>>()?;

    // per seed: one report per grid value
    let per_seed: Vec<Vec<MetricsReport>> = setup
        .seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<MetricsReport>> {
            let dataset = setup.source.dataset(seed)?;
            let plan = plan(&dataset, setup.ood, &setup.tau);
            if param == SweepParam::Tau {
                let config = TrainConfig {
                    seed,
                    ..setup.base.clone()
                };
                let out = run_once(&dataset, &plan, &config, Value::Null).with_context(|| format!("seed {seed}"))?;
                return grid
                    .iter()
                    .map(|&t| {
                        Ok(evaluate(
                            &dataset.graph,
                            &dataset.labels,
                            &out.splits,
                            &out.model,
                            &TauSelection::Fixed(t),
                            Value::Null,
                        )?
                        .report)
                    })
                    .collect();
            }
            configs
                .iter()
                .zip(&grid)
                .map(|(c, v)| {
                    let config = TrainConfig { seed, ..c.clone() };
                    Ok(run_once(&dataset, &plan, &config, Value::Null)
                        .with_context(|| format!("seed {seed}, {param:?} = {v}"))?
                        .evaluation
                        .report)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    print_header(&format!("{param:?}").to_lowercase());
    for (g, &value) in grid.iter().enumerate() {
        let runs: Vec<RunRow> = setup
            .seeds
            .iter()
            .zip(&per_seed)
            .map(|(&seed, reports)| RunRow::new(seed, &reports[g]))
            .collect();
        let summary = RunRow::summarize(&runs);
        print_row(&value.to_string(), &summary);
        rows.push(json!({ "value": value, "summary": summary, "runs": runs }));
    }
    if let Some(out) = &args.multi.out {
        create_dir(out)?;
        write_json(
            out,
            "sweep.json",
            &json!({ "config": setup.echo, "param": param, "grid": grid, "rows": rows }),
        )?;
        println!("wrote sweep.json to {}", out.display());
    }
    Ok(())
}

pub fn bench(args: BenchArgs) -> Result<()> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let source = DataSource::resolve(&args.common, &file)?;
    let dataset = source.dataset(args.seed)?;
    let paths = if args.paths.is_empty() {
        dataset.propagation_paths()
    } else {
        args.paths
            .iter()
            .map(|p| MetaPath::parse(p, dataset.graph.schema()).with_context(|| format!("--paths entry `{p}`")))
            .collect::<Result<_>>()?
    };
    let config = BenchConfig {
        steps: args.k.clone(),
        gamma: args.gamma,
        repeats: args.repeats,
        seed: args.seed,
    };
    let report = bench_propagation(&dataset.graph, &paths, &config)?;
    println!(
        "{} target nodes, paths {}, nnz {:?}, compose {:.3} ms",
        report.n_target,
        paths.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","),
        report.nnz,
        report.compose_seconds * 1e3
    );
    println!("{:>4} {:>12} {:>12}", "k", "cold ms", "warm ms");
    for t in &report.timings {
        println!(
            "{:>4} {:>12.3} {:>12.3}",
            t.steps,
            t.cold_seconds * 1e3,
            t.warm_seconds * 1e3
        );
    }
    println!("warm time ratio, largest k over smallest: {:.2}", report.warm_ratio);
    if let Some(out) = &args.out {
        create_dir(out)?;
        let echo = json!({ "command": "bench", "data": source.echo(), "seed": args.seed, "bench": config });
        write_json(out, "bench.json", &json!({ "config": echo, "report": report }))?;
        println!("wrote bench.json to {}", out.display());
    }
    Ok(())
}
