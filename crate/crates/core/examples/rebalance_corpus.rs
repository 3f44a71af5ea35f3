//! Rebalancing a labeled corpus into a fixed-size pool and test set at
//! several abuse priors, and what happens when a prior cannot be met.
//!
//! cargo run --example rebalance_corpus

use al_harness::corpus::{max_feasible_pool, rebalance, RebalancedDataset};
use al_harness::runner::SyntheticSpec;
use al_harness::{generate_synthetic_corpus, Error};

fn main() -> al_harness::Result<()> {
    let spec = SyntheticSpec {
        size: 40_000,
        imbalance: 0.35,
        ..Default::default()
    };
    let docs = generate_synthetic_corpus(&spec, "synth")?;
    let (pos, neg) = RebalancedDataset::class_counts(&docs);
    println!("source: {} documents, {pos} abusive, {neg} not", docs.len());

    for imbalance in [0.5, 0.1, 0.05] {
        let data = rebalance(&docs, imbalance, 20_000, 5_000, 0)?;
        let (tp, tn) = RebalancedDataset::class_counts(&data.train);
        let (sp, sn) = RebalancedDataset::class_counts(&data.test);
        println!("{imbalance:>5}: pool {tp}/{tn}  test {sp}/{sn}");
    }

    // 14k abusive documents cannot fill a balanced 30k pool plus test set
    match rebalance(&docs, 0.5, 30_000, 5_000, 0) {
        Err(Error::InsufficientClass { class, required, available, max_pool_size }) => {
            println!("0.5 at 30000: needs {required} {class:?}, have {available}; largest pool {max_pool_size}");
        }
        other => println!("unexpected: {:?}", other.map(|d| d.train.len())),
    }

    // 10,834 attacks in a wiki-sized training file cap a balanced pool
    println!("wiki-like source at 50%: max pool {}", max_feasible_pool(0.5, 10_834, 100_000, 0, 0));
    Ok(())
}
