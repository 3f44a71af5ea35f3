//! One acquisition step with each query strategy from the same labeled
//! seed, showing how many abusive documents each batch picks up.
//!
//! cargo run --release --example query_strategies

use al_harness::classifier::{embed, fit, TrainingExample};
use al_harness::features::TfidfOptions;
use al_harness::runner::{DatasetSpec, SyntheticSpec};
use al_harness::strategies::{
    query_embedding_kmeans, query_greedy_coreset, query_least_confidence, query_random, seed_heuristic,
    CoresetDistance, KMeansOptions,
};
use al_harness::{ClassifierSpec, KeywordList, PoolState, PreparedData};

fn main() -> al_harness::Result<()> {
    let spec = DatasetSpec::synthetic(SyntheticSpec::default(), 5_000, 1_000);
    let data = PreparedData::new(spec.rebalanced("synth", 0.05, ".".as_ref())?, TfidfOptions::default())?;
    let mut pool = PoolState::from_dataset(&data.dataset);
    let seed = seed_heuristic(&pool, &data.pool_texts(), 20, &KeywordList::shipped(), 0.05, 1)?;
    pool.reveal(&seed.indices)?;

    let examples: Vec<TrainingExample<'_>> = pool
        .labeled()
        .map(|(p, label)| TrainingExample {
            id: pool.id(p),
            features: &data.pool_features[p],
            label,
            batch: 0,
        })
        .collect();
    let model = fit(&ClassifierSpec::default(), &examples, &data.vocab)?;
    let scored: Vec<(usize, [f64; 2])> = pool
        .unlabeled()
        .map(|p| (p, model.predict_proba(&data.pool_features[p])))
        .collect();
    let feats: Vec<_> = data.pool_features.iter().collect();
    let embeddings = embed(&feats, 256, 7)?;

    let batch = 50;
    let picks = [
        ("random", query_random(&pool, batch, 9)?),
        ("least_confidence", query_least_confidence(&pool, batch, &scored)?),
        (
            "greedy_coreset",
            query_greedy_coreset(&pool, batch, &embeddings, CoresetDistance::LabeledAndSelected)?.indices,
        ),
        (
            "embedding_kmeans",
            query_embedding_kmeans(&pool, batch, &embeddings, 9, KMeansOptions::default())?,
        ),
    ];
    let gold = data.dataset.train.iter().map(|d| d.label).collect::<Vec<_>>();
    println!("seed: {} labeled, {} abusive", pool.n_labeled(), pool.labeled_class_counts().0);
    for (name, idx) in picks {
        let abusive = idx.iter().filter(|&&i| gold[i].is_abuse()).count();
        println!("{name:<17} {abusive:>2}/{batch} abusive");
    }
    Ok(())
}
