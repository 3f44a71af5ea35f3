//! Keyword weak labels: how the density threshold trades false positives
//! for false negatives, and how the heuristic cold start compares with a
//! random seed on a skewed pool.
//!
//! cargo run --example keyword_seeding

use al_harness::corpus::Label;
use al_harness::features::{keyword_density, weak_label_from_density};
use al_harness::metrics::{fpr_fnr, ConfusionCounts};
use al_harness::runner::{DatasetSpec, SyntheticSpec};
use al_harness::strategies::{seed_heuristic, seed_random};
use al_harness::{KeywordList, PoolState};

fn main() -> al_harness::Result<()> {
    let keywords = KeywordList::shipped();
    println!("{} keywords ({})", keywords.len(), keywords.provenance());

    let spec = DatasetSpec::synthetic(SyntheticSpec::default(), 20_000, 5_000);
    let data = spec.rebalanced("synth", 0.05, ".".as_ref())?;
    let gold: Vec<Label> = data.train.iter().map(|d| d.label).collect();
    let density: Vec<f64> = data.train.iter().map(|d| keyword_density(&d.text, &keywords)).collect();

    println!("threshold   FPR     FNR");
    for threshold in [0.01, 0.05, 0.10, 0.25] {
        let weak: Vec<Label> = density.iter().map(|&d| weak_label_from_density(d, threshold)).collect();
        let (fpr, fnr) = fpr_fnr(&ConfusionCounts::from_predictions(&gold, &weak));
        println!("{threshold:>9}  {:.4}  {:.4}", fpr.unwrap_or(0.0), fnr.unwrap_or(0.0));
    }

    let pool = PoolState::from_dataset(&data);
    let texts: Vec<&str> = data.train.iter().map(|d| d.text.as_str()).collect();
    let abusive = |idx: &[usize]| idx.iter().filter(|&&i| gold[i].is_abuse()).count();
    let mut random_single_class = 0;
    for seed in 0..50 {
        let random = seed_random(&pool, 20, seed)?;
        let n = abusive(&random);
        if n == 0 || n == 20 {
            random_single_class += 1;
        }
    }
    let heuristic = seed_heuristic(&pool, &texts, 20, &keywords, 0.05, 1)?;
    println!(
        "random seeds with one class only: {random_single_class}/50; heuristic seed: {}/20 abusive ({} weakly positive)",
        abusive(&heuristic.indices),
        heuristic.from_positive
    );
    Ok(())
}
