//! A single active-learning run: the learning curve, the labeled pool's
//! abuse fraction, and the F1_AL / N_90 summaries against a passive model.
//!
//! cargo run --release --example active_learning_loop [strategy]

use al_harness::engine::run_passive_baseline;
use al_harness::features::TfidfOptions;
use al_harness::runner::{DatasetSpec, SyntheticSpec};
use al_harness::{compute_f1_al, compute_n90, run_active_learning, ExperimentConfig, KeywordList, PreparedData, QueryStrategy};

fn main() -> al_harness::Result<()> {
    let strategy = match std::env::args().nth(1) {
        Some(s) => serde_json::from_value::<QueryStrategy>(serde_json::Value::String(s))?,
        None => QueryStrategy::LeastConfidence,
    };
    let spec = DatasetSpec::synthetic(SyntheticSpec::default(), 20_000, 5_000);
    let data = PreparedData::new(spec.rebalanced("synth", 0.1, ".".as_ref())?, TfidfOptions::default())?;
    let config = ExperimentConfig {
        dataset: "synth".into(),
        imbalance: 0.1,
        query_strategy: strategy,
        budget: 20 + 20 * 50,
        ..Default::default()
    };
    let passive = run_passive_baseline(&config, &data, 1)?.macro_f1;
    let curve = run_active_learning(&config, &data, &KeywordList::shipped(), 1)?;

    println!("labeled  macro-F1  abuse fraction");
    for p in curve.points.iter().step_by(2) {
        println!("{:>7}  {:.4}    {:.3}", p.labeled_count, p.macro_f1, p.labeled_abuse_fraction);
    }
    println!(
        "{strategy}: F1_AL {:.4}, passive {passive:.4}, N_90 {}",
        compute_f1_al(&curve)?,
        compute_n90(&curve, passive)?
    );
    Ok(())
}
