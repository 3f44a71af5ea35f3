//! Fitting the builtin linear classifiers on a labeled subset and scoring
//! them on the test split.
//!
//! cargo run --release --example train_linear

use al_harness::classifier::{fit, TrainingExample};
use al_harness::corpus::Label;
use al_harness::engine::Evaluation;
use al_harness::features::TfidfOptions;
use al_harness::metrics::ConfusionCounts;
use al_harness::runner::{DatasetSpec, SyntheticSpec};
use al_harness::{ClassifierSpec, PreparedData, TrainedModel};

fn main() -> al_harness::Result<()> {
    let spec = DatasetSpec::synthetic(SyntheticSpec::default(), 20_000, 5_000);
    let data = PreparedData::new(spec.rebalanced("synth", 0.1, ".".as_ref())?, TfidfOptions::default())?;
    let gold = data.test_gold();

    for n in [100, 1_000, 20_000] {
        let examples: Vec<TrainingExample<'_>> = data.dataset.train[..n]
            .iter()
            .zip(data.pool_features.iter())
            .map(|(d, f)| TrainingExample {
                id: d.id,
                features: f,
                label: d.label,
                batch: 0,
            })
            .collect();
        for spec in [ClassifierSpec::default(), ClassifierSpec::hinge()] {
            let model = fit(&spec, &examples, &data.vocab)?;
            let predicted: Vec<Label> = data.test_features.iter().map(|x| model.predict(x)).collect();
            let eval = Evaluation::from_counts(ConfusionCounts::from_predictions(&gold, &predicted))?;
            println!("{n:>6} docs  {:<12} macro-F1 {:.4}", spec.name, eval.macro_f1);
            if n == 1_000 && spec.name == "linear" {
                let json = model.to_json()?;
                assert_eq!(TrainedModel::from_json(&json)?, model);
                println!("              model JSON {} bytes, fingerprint {}", json.len(), &model.fingerprint[..12]);
            }
        }
    }
    Ok(())
}
