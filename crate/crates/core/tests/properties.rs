//! Property suites for the corpus, feature, classifier, strategy, engine
//! and metric invariants.

use std::collections::HashSet;
use std::path::Path;

use proptest::prelude::*;

use al_harness::classifier::{fit, TrainingExample};
use al_harness::corpus::{
    binarize_label, clean_corpus, clean_text, rebalance, Document, Label, LabelScheme,
};
use al_harness::engine::{run_observed, CurvePoint, PreparedData, RunMeta};
use al_harness::features::{keyword_density, weak_label, DenseVector, KeywordList, TfidfOptions, Vocabulary};
use al_harness::metrics::{aggregate_runs, f1_al_from_points, macro_f1, n90_from_points, ConfusionCounts, N90};
use al_harness::runner::{DatasetSpec, SyntheticSpec};
use al_harness::strategies::{
    least_confidence_score, query_embedding_kmeans, query_greedy_coreset, query_least_confidence, query_random,
    CoresetDistance, KMeansOptions, QueryStrategy,
};
use al_harness::{BuiltinLearner, ClassifierSpec, ExperimentConfig, LearningCurve, PoolState};

const WORDS: &[&str] = &[
    "you", "idiot", "thanks", "edit", "page", "stupid", "moron", "the", "article", "fool", "please", "source",
];

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 0..12).prop_map(|w| w.join(" "))
}

fn corpus(max: usize) -> impl Strategy<Value = Vec<(String, bool)>> {
    prop::collection::vec((sentence(), any::<bool>()), 1..max)
}

fn documents(rows: &[(String, bool)]) -> Vec<Document> {
    rows.iter()
        .enumerate()
        .map(|(i, (t, a))| Document::new(i as u64, t.clone(), Label::from_bool(*a), "prop"))
        .collect()
}

fn labeled_docs(pos: usize, neg: usize) -> Vec<Document> {
    (0..pos + neg)
        .map(|i| Document::new(i as u64 * 3 + 1, format!("doc {i}"), Label::from_bool(i < pos), "prop"))
        .collect()
}

fn ids(docs: &[Document]) -> HashSet<u64> {
    docs.iter().map(|d| d.id).collect()
}

fn pool_with_labeled(n: usize, labeled: &[usize]) -> PoolState {
    let gold = (0..n).map(|i| Label::from_bool(i % 3 == 0)).collect();
    let mut pool = PoolState::new((0..n as u64).map(|i| i * 7 + 2).collect(), gold).unwrap();
    pool.reveal(labeled).unwrap();
    pool
}

fn points(dim: usize) -> impl Strategy<Value = Vec<DenseVector>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), 8..40)
        .prop_map(|rows| rows.into_iter().map(DenseVector).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rebalanced_splits_have_exact_counts(
        pos in 20usize..200,
        neg in 20usize..200,
        imb in 0.05f64..0.95,
        pool_frac in 0.1f64..0.6,
        seed in any::<u64>(),
    ) {
        let docs = labeled_docs(pos, neg);
        let pool_size = ((pos + neg) as f64 * pool_frac) as usize;
        let test_size = pool_size / 3;
        match rebalance(&docs, imb, pool_size, test_size, seed) {
            Ok(d) => {
                prop_assert_eq!(d.train.len(), pool_size);
                prop_assert_eq!(d.test.len(), test_size);
                prop_assert!(ids(&d.train).is_disjoint(&ids(&d.test)));
                let abuse = |docs: &[Document]| docs.iter().filter(|x| x.label.is_abuse()).count();
                prop_assert_eq!(abuse(&d.train), (imb * pool_size as f64 + 1e-9).floor() as usize);
                prop_assert_eq!(abuse(&d.test), (imb * test_size as f64 + 1e-9).floor() as usize);
                let again = rebalance(&docs, imb, pool_size, test_size, seed).unwrap();
                prop_assert_eq!(ids(&again.train), ids(&d.train));
                prop_assert_eq!(ids(&again.test), ids(&d.test));
            }
            Err(e) => prop_assert!(e.to_string().contains("max"), "{}", e),
        }
    }

    #[test]
    fn cleaning_is_idempotent(text in any::<String>()) {
        let once = clean_text(&text);
        prop_assert_eq!(clean_text(&once), once);
    }

    #[test]
    fn corpus_cleaning_is_idempotent(rows in corpus(30)) {
        let once = clean_corpus(documents(&rows));
        prop_assert_eq!(clean_corpus(once.clone()), once);
    }

    #[test]
    fn tfidf_rows_are_unit_or_zero(rows in corpus(30), probe in sentence()) {
        let texts: Vec<String> = rows.into_iter().map(|r| r.0).collect();
        let vocab = Vocabulary::fit(&texts, TfidfOptions::default()).unwrap();
        for t in texts.iter().chain([&probe]) {
            let n = vocab.transform(t).norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12, "norm {}", n);
        }
    }

    #[test]
    fn document_frequencies_ignore_corpus_order(rows in corpus(30), seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let texts: Vec<String> = rows.into_iter().map(|r| r.0).collect();
        let mut shuffled = texts.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = Vocabulary::fit(&texts, TfidfOptions::default()).unwrap();
        let b = Vocabulary::fit(&shuffled, TfidfOptions::default()).unwrap();
        for w in WORDS {
            prop_assert_eq!(a.df(w), b.df(w));
        }
    }

    #[test]
    fn keyword_density_is_a_bag_fraction(words in prop::collection::vec(prop::sample::select(WORDS), 0..20), seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let kw = KeywordList::shipped();
        let text = words.join(" ");
        let d = keyword_density(&text, &kw);
        prop_assert!((0.0..=1.0).contains(&d));
        let mut shuffled = words.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(keyword_density(&shuffled.join(" "), &kw), d);
    }

    #[test]
    fn weak_labels_shrink_as_threshold_rises(text in sentence(), lo in 0.0f64..1.0, hi in 0.0f64..1.0) {
        let kw = KeywordList::shipped();
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        if weak_label(&text, &kw, hi) == Label::Abuse {
            prop_assert_eq!(weak_label(&text, &kw, lo), Label::Abuse);
        }
    }

    #[test]
    fn least_confidence_score_range(p in 0.0f64..=1.0) {
        let s = least_confidence_score([1.0 - p, p]);
        prop_assert!((0.0..=0.5).contains(&s));
    }

    #[test]
    fn strategies_return_distinct_unlabeled_batches(
        pts in points(4),
        n_labeled in 1usize..5,
        batch in 1usize..6,
        seed in any::<u64>(),
    ) {
        let n = pts.len();
        let labeled: Vec<usize> = (0..n_labeled).collect();
        let pool = pool_with_labeled(n, &labeled);
        let probs: Vec<(usize, [f64; 2])> = pool
            .unlabeled()
            .map(|p| { let q = (p as f64 * 0.37).fract(); (p, [1.0 - q, q]) })
            .collect();
        let batches = [
            query_random(&pool, batch, seed).unwrap(),
            query_least_confidence(&pool, batch, &probs).unwrap(),
            query_greedy_coreset(&pool, batch, &pts, CoresetDistance::LabeledAndSelected).unwrap().indices,
            query_greedy_coreset(&pool, batch, &pts, CoresetDistance::LabeledOnly).unwrap().indices,
            query_embedding_kmeans(&pool, batch, &pts, seed, KMeansOptions::default()).unwrap(),
        ];
        for b in &batches {
            prop_assert_eq!(b.len(), batch);
            prop_assert_eq!(b.iter().collect::<HashSet<_>>().len(), batch);
            prop_assert!(b.iter().all(|&p| p < n && !pool.is_labeled(p)));
        }
        // same inputs, same selection
        prop_assert_eq!(&query_random(&pool, batch, seed).unwrap(), &batches[0]);
        prop_assert_eq!(&query_least_confidence(&pool, batch, &probs).unwrap(), &batches[1]);
        prop_assert_eq!(
            &query_embedding_kmeans(&pool, batch, &pts, seed, KMeansOptions::default()).unwrap(),
            &batches[4]
        );
    }

    #[test]
    fn coreset_pick_distances_never_increase(pts in points(3), batch in 1usize..7) {
        let pool = pool_with_labeled(pts.len(), &[0, 1]);
        let sel = query_greedy_coreset(&pool, batch, &pts, CoresetDistance::LabeledAndSelected).unwrap();
        for w in sel.pick_distances.windows(2) {
            prop_assert!(w[1] <= w[0], "{:?}", sel.pick_distances);
        }
    }

    #[test]
    fn macro_f1_bounded_and_swap_invariant(tp in 0usize..50, fp in 0usize..50, tn in 0usize..50, fn_ in 0usize..50) {
        prop_assume!(tp + fp + tn + fn_ > 0);
        let c = ConfusionCounts::new(tp, fp, tn, fn_);
        let f = macro_f1(&c).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((macro_f1(&c.swapped()).unwrap() - f).abs() < 1e-12);
    }

    #[test]
    fn curve_summaries_are_consistent(f1s in prop::collection::vec(0.0f64..1.0, 1..40), f1_ref in 0.1f64..1.0) {
        let pts: Vec<(usize, f64)> = f1s.iter().enumerate().map(|(i, &f)| (20 + 50 * i, f)).collect();
        let budget = pts.last().unwrap().0;
        let best = f1_al_from_points(&pts).unwrap();
        prop_assert!(pts.iter().all(|p| p.1 <= best));
        if let N90::Reached(n) = n90_from_points(&pts, f1_ref, false).unwrap() {
            prop_assert!(n <= budget);
        }
    }

    #[test]
    fn aggregation_ignores_run_order(
        curves in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 1..5),
        failed in prop::collection::vec(any::<bool>(), 5),
        rot in 0usize..5,
    ) {
        let runs: Vec<LearningCurve> = curves
            .iter()
            .enumerate()
            .map(|(s, f1s)| LearningCurve {
                meta: RunMeta { seed: s as u64 + 1, ..Default::default() },
                points: f1s
                    .iter()
                    .enumerate()
                    .map(|(i, &f)| CurvePoint { iteration: i, labeled_count: 20 + 50 * i, macro_f1: f, ..Default::default() })
                    .collect(),
                failed: failed[s],
                failure: None,
            })
            .collect();
        let mut rotated = runs.clone();
        let k = rot % rotated.len();
        rotated.rotate_left(k);
        rotated.reverse();
        prop_assert_eq!(
            aggregate_runs(&runs, Some(0.8), Some(0.9)).unwrap(),
            aggregate_runs(&rotated, Some(0.8), Some(0.9)).unwrap()
        );
    }
}

#[test]
fn binarization_is_total_and_onto() {
    for scheme in [LabelScheme::Wiki, LabelScheme::Tweets, LabelScheme::Binary] {
        let labels: HashSet<Label> = scheme
            .known_labels()
            .iter()
            .map(|l| binarize_label(l, scheme).unwrap())
            .collect();
        assert_eq!(labels.len(), 2, "{scheme}");
    }
    assert!(binarize_label("maybe", LabelScheme::Binary).is_err());
}

fn small_data(imbalance: f64) -> PreparedData {
    let synth = SyntheticSpec {
        size: 3_000,
        ..Default::default()
    };
    let spec = DatasetSpec::synthetic(synth, 1_000, 300);
    PreparedData::new(spec.rebalanced("synth", imbalance, Path::new(".")).unwrap(), TfidfOptions::default()).unwrap()
}

fn example_set<'a>(data: &'a PreparedData, pool: &PoolState) -> Vec<TrainingExample<'a>> {
    pool.labeled()
        .map(|(p, label)| TrainingExample {
            id: data.dataset.train[p].id,
            features: &data.pool_features[p],
            label,
            batch: pool.batch_of(p).unwrap_or(0),
        })
        .collect()
}

#[test]
fn engine_trajectories_keep_their_contracts() {
    let data = small_data(0.1);
    let test_ids = ids(&data.dataset.test);
    let keywords = KeywordList::shipped();
    for strategy in QueryStrategy::ALL {
        let config = ExperimentConfig {
            imbalance: 0.1,
            query_strategy: strategy,
            batch_size: 30,
            budget: 20 + 5 * 30,
            ..Default::default()
        };
        let mut learner = BuiltinLearner::new(config.classifier.clone(), &data.vocab, 32, 7);
        let mut snapshots: Vec<PoolState> = Vec::new();
        let outcome = run_observed(&config, &data, &keywords, 4, &mut learner, true, &mut |pool, _| {
            snapshots.push(pool.clone())
        })
        .unwrap();
        let counts: Vec<usize> = outcome.curve.points.iter().map(|p| p.labeled_count).collect();
        assert_eq!(counts, (0..=5).map(|i| 20 + 30 * i).collect::<Vec<_>>(), "{strategy}");
        assert_eq!(snapshots.len(), 6);
        for (pool, model) in snapshots.iter().zip(&outcome.models) {
            assert!(pool.labeled_positions().all(|p| !test_ids.contains(&pool.id(p))));
            let scratch = fit(&config.classifier.with_seed(4), &example_set(&data, pool), &data.vocab).unwrap();
            assert_eq!(scratch.weights, model.weights, "{strategy}");
            assert_eq!(scratch.bias, model.bias, "{strategy}");
            assert_eq!(scratch.fingerprint, model.fingerprint);
        }
    }
}

#[test]
fn swapping_labels_reverses_the_ranking() {
    let data = small_data(0.3);
    let labeled: Vec<usize> = (0..200).collect();
    let spec = ClassifierSpec::default();
    let make = |swap: bool| {
        let ex: Vec<TrainingExample<'_>> = labeled
            .iter()
            .map(|&p| {
                let d = &data.dataset.train[p];
                TrainingExample {
                    id: d.id,
                    features: &data.pool_features[p],
                    label: if swap { d.label.flipped() } else { d.label },
                    batch: 0,
                }
            })
            .collect();
        fit(&spec, &ex, &data.vocab).unwrap()
    };
    let (a, b) = (make(false), make(true));
    let ma: Vec<f64> = data.test_features.iter().map(|x| a.margin(x)).collect();
    let mb: Vec<f64> = data.test_features.iter().map(|x| b.margin(x)).collect();
    for i in 0..ma.len() {
        let p = a.predict_proba(&data.test_features[i]);
        assert!(p[0] > 0.0 && p[1] > 0.0 && p[0] < 1.0 && p[1] < 1.0);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        for j in (i + 1)..ma.len().min(i + 40) {
            assert_eq!(
                ma[i].total_cmp(&ma[j]),
                mb[j].total_cmp(&mb[i]),
                "items {i} and {j}"
            );
        }
    }
}
