//! Four-arm ablation plus the MSP baseline on the default synthetic generator.
//!
//! `cargo run --release -p oodhg-core --example calibrate [-- seeds]`

use std::time::Instant;

use oodhg::data::{generate_synthetic, SynthConfig};
use oodhg::model::TrainConfig;
use oodhg::pipeline::{run_once, Arm, MeanStd, RunPlan};

fn main() -> oodhg::Result<()> {
    let n_seeds: u64 = std::env::args().nth(1).map_or(5, |s| s.parse().expect("seed count"));
    let start = Instant::now();
    let mut full = Vec::new();
    let mut msp = Vec::new();
    for arm in Arm::ALL {
        let mut aurocs = Vec::new();
        for seed in 0..n_seeds {
            let dataset = generate_synthetic(&SynthConfig {
                seed,
                ..SynthConfig::default()
            })?;
            let plan = RunPlan::for_dataset(&dataset, 3);
            let config = arm.config(&TrainConfig {
                seed,
                ..TrainConfig::default()
            });
            let out = run_once(&dataset, &plan, &config, serde_json::Value::Null)?;
            aurocs.push(out.evaluation.report.auroc);
            if arm == Arm::Full {
                msp.push(out.evaluation.msp.auroc);
                full.push(out.evaluation.report.auroc);
            }
        }
        let s = MeanStd::of(&aurocs);
        println!("{:<16} auroc {:.4} ± {:.4}  {:?}", arm.name(), s.mean, s.std, aurocs);
    }
    let s = MeanStd::of(&msp);
    println!("{:<16} auroc {:.4} ± {:.4}  {:?}", "MSP", s.mean, s.std, msp);
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
