//! Passive full-pool baseline against random and least-confidence sampling
//! on a synthetic 20k pool, at a balanced and two skewed priors.
//!
//! cargo run --release --example passive_vs_active [seeds]

use std::time::Instant;

use al_harness::engine::run_passive_baseline;
use al_harness::features::TfidfOptions;
use al_harness::metrics::{aggregate_runs, compute_n90};
use al_harness::runner::{DatasetSpec, SyntheticSpec};
use al_harness::{run_active_learning, ExperimentConfig, KeywordList, PreparedData, QueryStrategy};

fn main() -> al_harness::Result<()> {
    let n_seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let spec = DatasetSpec::synthetic(SyntheticSpec::default(), 20_000, 5_000);
    let keywords = KeywordList::shipped();

    for imbalance in [0.5, 0.1, 0.05] {
        let data = PreparedData::new(spec.rebalanced("synth", imbalance, ".".as_ref())?, TfidfOptions::default())?;
        let base = ExperimentConfig {
            dataset: "synth".into(),
            imbalance,
            ..Default::default()
        };
        let passive = run_passive_baseline(&base, &data, 1)?;
        println!("synth {imbalance}: passive F1 {:.4}", passive.macro_f1);

        for strategy in [QueryStrategy::Random, QueryStrategy::LeastConfidence] {
            let config = ExperimentConfig {
                query_strategy: strategy,
                ..base.clone()
            };
            let start = Instant::now();
            let runs: Vec<_> = (1..=n_seeds)
                .map(|s| run_active_learning(&config, &data, &keywords, s))
                .collect::<Result<_, _>>()?;
            let per_seed: Vec<String> = runs
                .iter()
                .map(|c| compute_n90(c, passive.macro_f1).map(|n| n.to_string()).unwrap_or("failed".into()))
                .collect();
            let summary = aggregate_runs(&runs, Some(passive.macro_f1), Some(passive.macro_f1))?;
            let last = runs[0].points.last().map(|p| p.labeled_abuse_fraction).unwrap_or(0.0);
            println!(
                "  {strategy:<16} F1_AL {:.4}  N90 {:>12}  per-seed {:?}  final abuse fraction {last:.3}  {:.1}s/run",
                summary.f1_al.unwrap_or(0.0),
                summary.n90.map(|n| n.to_string()).unwrap_or_default(),
                per_seed,
                start.elapsed().as_secs_f64() / n_seeds as f64,
            );
        }
    }
    Ok(())
}
