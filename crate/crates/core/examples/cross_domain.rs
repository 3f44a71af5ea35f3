//! Training on one corpus and evaluating on a shifted one: models saved
//! along an active-learning run are re-scored on the target test set.
//!
//! cargo run --release --example cross_domain

use al_harness::engine::run_with_learner;
use al_harness::features::TfidfOptions;
use al_harness::runner::{DatasetSpec, SyntheticSpec};
use al_harness::{
    cross_dataset_eval, BuiltinLearner, ExperimentConfig, KeywordList, PreparedData, QueryStrategy,
};

fn main() -> al_harness::Result<()> {
    let imbalance = 0.1;
    let source_spec = DatasetSpec::synthetic(SyntheticSpec::default(), 10_000, 2_000);
    let target_spec = DatasetSpec::synthetic(
        SyntheticSpec {
            seed: 5,
            domain_shift: 0.6,
            ..Default::default()
        },
        10_000,
        2_000,
    );
    let source = PreparedData::new(source_spec.rebalanced("source", imbalance, ".".as_ref())?, TfidfOptions::default())?;
    let target = target_spec.rebalanced("target", imbalance, ".".as_ref())?;

    let config = ExperimentConfig {
        dataset: "source".into(),
        imbalance,
        query_strategy: QueryStrategy::LeastConfidence,
        budget: 20 + 12 * 50,
        ..Default::default()
    };
    let mut learner = BuiltinLearner::new(config.classifier.clone(), &source.vocab, 256, 7);
    let run = run_with_learner(&config, &source, &KeywordList::shipped(), 1, &mut learner, true)?;
    let shifted = cross_dataset_eval(&run.models, &run.curve, &source.vocab, &target)?;

    println!("labeled  in-domain  shifted");
    for (a, b) in run.curve.points.iter().zip(&shifted.points).step_by(2) {
        println!("{:>7}  {:.4}     {:.4}", a.labeled_count, a.macro_f1, b.macro_f1);
    }

    let skewed = target_spec.rebalanced("target", 0.05, ".".as_ref())?;
    let err = cross_dataset_eval(&run.models, &run.curve, &source.vocab, &skewed).unwrap_err();
    println!("mismatched priors: {err}");
    Ok(())
}
