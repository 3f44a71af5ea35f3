//! The simulated active-learning loop.
//!
//! Labels of the rebalanced pool are withheld until a strategy requests them.
//! Each iteration queries a batch, reveals its gold labels, retrains the
//! classifier from scratch on the whole labeled set and evaluates on the
//! held-out test set.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    BuiltinLearner, ClassifierSpec, Item, LabeledItem, Learner, TrainedModel,
};
use crate::corpus::{Label, RebalancedDataset};
use crate::error::{Error, Result};
use crate::features::{DenseVector, KeywordList, SparseVector, TfidfOptions, Vocabulary};
use crate::metrics::{fpr_fnr, macro_f1, ConfusionCounts};
use crate::plugin::PluginLearner;
use crate::runner::{ExperimentConfig, FeatureMode};
use crate::strategies::{
    query_embedding_kmeans, query_least_confidence, query_random, seed_heuristic, seed_random,
    ColdStrategy, KCenterState, QueryStrategy,
};

/// Partition of the pool into labeled and unlabeled positions.
///
/// Positions index the pool (`RebalancedDataset::train`); document ids are
/// kept alongside for tie-breaking and reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolState {
    ids: Arc<Vec<u64>>,
    gold: Arc<Vec<Label>>,
    revealed: Vec<Option<Label>>,
    batch_of: Vec<Option<usize>>,
    order: Vec<usize>,
    unlabeled: BTreeSet<usize>,
    pub iteration: usize,
}

impl PoolState {
    pub fn new(ids: Vec<u64>, gold: Vec<Label>) -> Result<Self> {
        if ids.len() != gold.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                actual: gold.len(),
            });
        }
        let n = ids.len();
        Ok(PoolState {
            ids: Arc::new(ids),
            gold: Arc::new(gold),
            revealed: vec![None; n],
            batch_of: vec![None; n],
            order: Vec::new(),
            unlabeled: (0..n).collect(),
            iteration: 0,
        })
    }

    pub fn from_dataset(data: &RebalancedDataset) -> Self {
        let ids = data.train.iter().map(|d| d.id).collect();
        let gold = data.train.iter().map(|d| d.label).collect();
        Self::new(ids, gold).expect("lengths match")
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, pos: usize) -> u64 {
        self.ids[pos]
    }

    pub fn n_labeled(&self) -> usize {
        self.order.len()
    }

    pub fn n_unlabeled(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn is_labeled(&self, pos: usize) -> bool {
        self.revealed[pos].is_some()
    }

    pub fn label(&self, pos: usize) -> Option<Label> {
        self.revealed[pos]
    }

    pub fn batch_of(&self, pos: usize) -> Option<usize> {
        self.batch_of[pos]
    }

    /// Unlabeled positions in ascending order.
    pub fn unlabeled(&self) -> impl Iterator<Item = usize> + '_ {
        self.unlabeled.iter().copied()
    }

    /// Labeled positions in acquisition order.
    pub fn labeled_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().copied()
    }

    pub fn labeled(&self) -> impl Iterator<Item = (usize, Label)> + '_ {
        self.order.iter().map(|&p| (p, self.revealed[p].expect("labeled")))
    }

    /// `(abuse, non-abuse)` counts among revealed labels.
    pub fn labeled_class_counts(&self) -> (usize, usize) {
        let pos = self.labeled().filter(|(_, l)| l.is_abuse()).count();
        (pos, self.n_labeled() - pos)
    }

    /// Moves `indices` into the labeled set with their gold labels. The
    /// whole call fails without changes if any index is unknown, already
    /// labeled or repeated.
    pub fn reveal(&mut self, indices: &[usize]) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &i in indices {
            if i >= self.len() {
                return Err(Error::UnknownIndex(i));
            }
            if self.is_labeled(i) || !seen.insert(i) {
                return Err(Error::AlreadyLabeled(i));
            }
        }
        let batch = if self.order.is_empty() { 0 } else { self.iteration + 1 };
        for &i in indices {
            self.revealed[i] = Some(self.gold[i]);
            self.batch_of[i] = Some(batch);
            self.unlabeled.remove(&i);
            self.order.push(i);
        }
        if !indices.is_empty() && batch > 0 {
            self.iteration += 1;
        }
        Ok(())
    }

    /// Functional form of [`PoolState::reveal`].
    pub fn reveal_labels(&self, indices: &[usize]) -> Result<PoolState> {
        let mut next = self.clone();
        next.reveal(indices)?;
        Ok(next)
    }

    /// Checks the partition and oracle-fidelity invariants.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.n_labeled() + self.n_unlabeled() != self.len() {
            return Err(format!(
                "{} labeled + {} unlabeled != {}",
                self.n_labeled(),
                self.n_unlabeled(),
                self.len()
            ));
        }
        for (p, l) in self.labeled() {
            if self.unlabeled.contains(&p) {
                return Err(format!("position {p} is both labeled and unlabeled"));
            }
            if l != self.gold[p] {
                return Err(format!("position {p} revealed {l} but gold is {}", self.gold[p]));
            }
        }
        let distinct: BTreeSet<usize> = self.order.iter().copied().collect();
        if distinct.len() != self.order.len() {
            return Err("duplicate labeled position".into());
        }
        Ok(())
    }
}

/// Free-function form of [`PoolState::reveal_labels`].
pub fn reveal_labels(pool: &PoolState, indices: &[usize]) -> Result<PoolState> {
    pool.reveal_labels(indices)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMeta {
    pub dataset: String,
    pub imbalance: f64,
    pub classifier: String,
    pub cold_strategy: String,
    pub query_strategy: String,
    pub seed_size: usize,
    pub batch_size: usize,
    pub budget: usize,
    pub seed: u64,
}

impl RunMeta {
    pub fn from_config(config: &ExperimentConfig, seed: u64) -> Self {
        RunMeta {
            dataset: config.dataset.clone(),
            imbalance: config.imbalance,
            classifier: config.classifier.name.clone(),
            cold_strategy: config.cold_strategy.name().to_string(),
            query_strategy: config.query_strategy.name().to_string(),
            seed_size: config.seed_size,
            batch_size: config.batch_size,
            budget: config.budget,
            seed,
        }
    }
}

/// Test-set evaluation of one model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Evaluation {
    pub macro_f1: f64,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub counts: ConfusionCounts,
}

impl Evaluation {
    pub fn from_counts(counts: ConfusionCounts) -> Result<Self> {
        let (fpr, fnr) = fpr_fnr(&counts);
        Ok(Evaluation {
            macro_f1: macro_f1(&counts)?,
            fpr,
            fnr,
            counts,
        })
    }

    /// Predicts abuse when `p(abuse) > 0.5`.
    pub fn from_probabilities(gold: &[Label], probs: &[[f64; 2]]) -> Result<Self> {
        let predicted: Vec<Label> = probs.iter().map(|p| Label::from_bool(p[1] > 0.5)).collect();
        Self::from_counts(ConfusionCounts::from_predictions(gold, &predicted))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub labeled_count: usize,
    pub macro_f1: f64,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub labeled_abuse: usize,
    pub labeled_abuse_fraction: f64,
    pub counts: ConfusionCounts,
}

impl CurvePoint {
    pub fn labeled_abuse_fraction(&self) -> f64 {
        self.labeled_abuse_fraction
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LearningCurve {
    pub meta: RunMeta,
    pub points: Vec<CurvePoint>,
    pub failed: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub meta: RunMeta,
    pub config: ExperimentConfig,
    pub failed: bool,
    pub failure: Option<String>,
    pub n_points: usize,
    pub wall_time_secs: f64,
}

impl LearningCurve {
    pub fn f1_points(&self) -> Vec<(usize, f64)> {
        self.points.iter().map(|p| (p.labeled_count, p.macro_f1)).collect()
    }

    pub fn labeled_counts(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.labeled_count).collect()
    }

    /// One JSON object per point, newline terminated.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for p in &self.points {
            out.push_str(&serde_json::to_string(p)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(self.to_jsonl()?.as_bytes()).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_points(path: impl AsRef<Path>) -> Result<Vec<CurvePoint>> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut points = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            points.push(serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
                path: path.to_path_buf(),
                row: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(points)
    }

    /// Writes `curve.jsonl` and `manifest.json` into `dir`.
    pub fn write_run_dir(&self, dir: impl AsRef<Path>, config: &ExperimentConfig, wall_time_secs: f64) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.write_jsonl(dir.join("curve.jsonl"))?;
        let manifest = RunManifest {
            meta: self.meta.clone(),
            config: config.clone(),
            failed: self.failed,
            failure: self.failure.clone(),
            n_points: self.points.len(),
            wall_time_secs,
        };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn read_run_dir(dir: impl AsRef<Path>) -> Result<(Self, RunManifest)> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: RunManifest = serde_json::from_str(&text)?;
        let points = Self::read_points(dir.join("curve.jsonl"))?;
        Ok((
            LearningCurve {
                meta: manifest.meta.clone(),
                points,
                failed: manifest.failed,
                failure: manifest.failure.clone(),
            },
            manifest,
        ))
    }
}

/// A rebalanced dataset with pool-fitted TF-IDF features, shared read-only
/// by every run on it.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub dataset: Arc<RebalancedDataset>,
    pub vocab: Arc<Vocabulary>,
    pub pool_features: Arc<Vec<SparseVector>>,
    pub test_features: Arc<Vec<SparseVector>>,
    pub tfidf: TfidfOptions,
}

impl PreparedData {
    /// Fits TF-IDF on the pool text (labels unseen) and transforms pool and
    /// test documents.
    pub fn new(dataset: RebalancedDataset, tfidf: TfidfOptions) -> Result<Self> {
        let texts: Vec<&str> = dataset.train.iter().map(|d| d.text.as_str()).collect();
        let vocab = Vocabulary::fit(&texts, tfidf)?;
        let pool_features = dataset.train.iter().map(|d| vocab.transform(&d.text)).collect();
        let test_features = dataset.test.iter().map(|d| vocab.transform(&d.text)).collect();
        Ok(PreparedData {
            dataset: Arc::new(dataset),
            vocab: Arc::new(vocab),
            pool_features: Arc::new(pool_features),
            test_features: Arc::new(test_features),
            tfidf,
        })
    }

    pub fn pool_texts(&self) -> Vec<&str> {
        self.dataset.train.iter().map(|d| d.text.as_str()).collect()
    }

    pub fn test_gold(&self) -> Vec<Label> {
        self.dataset.test.iter().map(|d| d.label).collect()
    }
}

/// Derives an independent sub-seed for one purpose of one run.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

const COLD_STREAM: u64 = 1;
const QUERY_STREAM: u64 = 1_000;

/// Builds the learner named by a classifier spec.
pub fn make_learner(spec: &ClassifierSpec, vocab: &Vocabulary, config: &ExperimentConfig) -> Result<Box<dyn Learner>> {
    spec.validate()?;
    match &spec.backend {
        crate::classifier::Backend::Builtin => Ok(Box::new(BuiltinLearner::new(
            spec.clone(),
            vocab,
            config.embedding_dim,
            config.embedding_seed,
        ))),
        crate::classifier::Backend::Plugin { command, timeout_secs } => {
            Ok(Box::new(PluginLearner::spawn(command, *timeout_secs)?))
        }
    }
}

/// Result of one AL run: the curve and, on request, the model trained at
/// every curve point.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub curve: LearningCurve,
    pub models: Vec<TrainedModel>,
    /// Labeled positions in acquisition order at the end of the run.
    pub acquired: Vec<usize>,
}

/// Per-iteration feature views for labeled-only TF-IDF refitting.
struct IterationFeatures {
    pool: Arc<Vec<SparseVector>>,
    test: Arc<Vec<SparseVector>>,
    vocab: Arc<Vocabulary>,
}

fn iteration_features(data: &PreparedData, pool: &PoolState, mode: FeatureMode) -> Result<IterationFeatures> {
    match mode {
        FeatureMode::Pool => Ok(IterationFeatures {
            pool: data.pool_features.clone(),
            test: data.test_features.clone(),
            vocab: data.vocab.clone(),
        }),
        FeatureMode::Labeled => {
            let texts: Vec<&str> = pool
                .labeled_positions()
                .map(|p| data.dataset.train[p].text.as_str())
                .collect();
            let vocab = Vocabulary::fit(&texts, data.tfidf)?;
            let pool_f = data.dataset.train.iter().map(|d| vocab.transform(&d.text)).collect();
            let test_f = data.dataset.test.iter().map(|d| vocab.transform(&d.text)).collect();
            Ok(IterationFeatures {
                pool: Arc::new(pool_f),
                test: Arc::new(test_f),
                vocab: Arc::new(vocab),
            })
        }
    }
}

fn pool_items<'a>(data: &'a PreparedData, feats: &'a [SparseVector], positions: impl Iterator<Item = usize>) -> Vec<Item<'a>> {
    positions
        .map(|p| Item {
            id: data.dataset.train[p].id,
            text: &data.dataset.train[p].text,
            features: &feats[p],
        })
        .collect()
}

fn evaluate(learner: &mut dyn Learner, data: &PreparedData, test: &[SparseVector]) -> Result<Evaluation> {
    let items: Vec<Item<'_>> = data
        .dataset
        .test
        .iter()
        .zip(test)
        .map(|(d, f)| Item {
            id: d.id,
            text: &d.text,
            features: f,
        })
        .collect();
    let probs = learner.predict_proba(&items)?;
    Evaluation::from_probabilities(&data.test_gold(), &probs)
}

/// Runs one seed of one experiment with the backend named in the config.
pub fn run_active_learning(
    config: &ExperimentConfig,
    data: &PreparedData,
    keywords: &KeywordList,
    seed: u64,
) -> Result<LearningCurve> {
    let mut learner = make_learner(&config.classifier, &data.vocab, config)?;
    Ok(run_with_learner(config, data, keywords, seed, learner.as_mut(), false)?.curve)
}

/// The AL loop against an explicit learner. With `keep_models` the model
/// of every curve point is returned (builtin backends only).
pub fn run_with_learner(
    config: &ExperimentConfig,
    data: &PreparedData,
    keywords: &KeywordList,
    seed: u64,
    learner: &mut dyn Learner,
    keep_models: bool,
) -> Result<RunOutcome> {
    run_observed(config, data, keywords, seed, learner, keep_models, &mut |_, _| {})
}

/// [`run_with_learner`] that calls `observer` with the pool state and the
/// revealed positions after the seed and after every batch.
pub fn run_observed(
    config: &ExperimentConfig,
    data: &PreparedData,
    keywords: &KeywordList,
    seed: u64,
    learner: &mut dyn Learner,
    keep_models: bool,
    observer: &mut dyn FnMut(&PoolState, &[usize]),
) -> Result<RunOutcome> {
    config.validate()?;
    let pool_size = data.dataset.train.len();
    if config.budget > pool_size {
        return Err(Error::InvalidConfig(format!(
            "budget {} exceeds pool size {pool_size}",
            config.budget
        )));
    }
    if config.query_strategy.needs_embeddings() && learner.embedding_dim() == 0 {
        return Err(Error::InvalidConfig(format!(
            "{} needs embeddings but the classifier backend provides none",
            config.query_strategy
        )));
    }

    let meta = RunMeta::from_config(config, seed);
    let mut pool = PoolState::from_dataset(&data.dataset);
    let texts = data.pool_texts();

    let cold_seed = derive_seed(seed, COLD_STREAM);
    let seed_idx = match config.cold_strategy {
        ColdStrategy::Random => seed_random(&pool, config.seed_size, cold_seed)?,
        ColdStrategy::Heuristic => {
            seed_heuristic(&pool, &texts, config.seed_size, keywords, config.keyword_threshold, cold_seed)?.indices
        }
    };
    pool.reveal(&seed_idx)?;
    observer(&pool, &seed_idx);

    let (abuse, non_abuse) = pool.labeled_class_counts();
    if abuse == 0 || non_abuse == 0 {
        let only = if abuse == 0 { Label::NonAbuse } else { Label::Abuse };
        log::info!(
            "{} seed {seed}: cold start produced only {only} labels; run marked failed",
            config.dataset
        );
        return Ok(RunOutcome {
            curve: LearningCurve {
                meta,
                points: Vec::new(),
                failed: true,
                failure: Some(Error::SingleClass(only).to_string()),
            },
            models: Vec::new(),
            acquired: pool.labeled_positions().collect(),
        });
    }

    let mut points = Vec::new();
    let mut models = Vec::new();
    let mut static_embeddings: Option<Vec<DenseVector>> = None;
    let mut kcenter: Option<KCenterState> = None;

    loop {
        let feats = iteration_features(data, &pool, config.feature_mode)?;
        let labeled: Vec<LabeledItem<'_>> = pool
            .labeled()
            .map(|(p, label)| LabeledItem {
                item: Item {
                    id: data.dataset.train[p].id,
                    text: &data.dataset.train[p].text,
                    features: &feats.pool[p],
                },
                label,
                batch: pool.batch_of(p).unwrap_or(0),
            })
            .collect();
        learner.set_vocabulary(&feats.vocab);
        learner.fit(&labeled, seed)?;

        let eval = evaluate(learner, data, &feats.test)?;
        let (abuse, _) = pool.labeled_class_counts();
        let n = pool.n_labeled();
        points.push(CurvePoint {
            iteration: points.len(),
            labeled_count: n,
            macro_f1: eval.macro_f1,
            fpr: eval.fpr,
            fnr: eval.fnr,
            labeled_abuse: abuse,
            labeled_abuse_fraction: abuse as f64 / n as f64,
            counts: eval.counts,
        });
        if keep_models {
            let mut m = learner
                .model()
                .cloned()
                .ok_or_else(|| Error::InvalidConfig("backend does not expose its models".into()))?;
            m.iteration = Some(points.len() - 1);
            models.push(m);
        }

        if n >= config.budget {
            break;
        }

        let query_seed = derive_seed(seed, QUERY_STREAM + pool.iteration as u64);
        let batch = match config.query_strategy {
            QueryStrategy::Random => query_random(&pool, config.batch_size, query_seed)?,
            QueryStrategy::LeastConfidence => {
                let positions: Vec<usize> = pool.unlabeled().collect();
                let items = pool_items(data, &feats.pool, positions.iter().copied());
                let probs = learner.predict_proba(&items)?;
                let scored: Vec<(usize, [f64; 2])> = positions.into_iter().zip(probs).collect();
                query_least_confidence(&pool, config.batch_size, &scored)?
            }
            QueryStrategy::GreedyCoreset | QueryStrategy::EmbeddingKmeans => {
                let reuse = learner.static_embeddings() && config.feature_mode == FeatureMode::Pool;
                let fresh;
                let embeddings: &[DenseVector] = if reuse {
                    if static_embeddings.is_none() {
                        let items = pool_items(data, &feats.pool, 0..pool_size);
                        static_embeddings = Some(learner.embed(&items)?);
                    }
                    static_embeddings.as_deref().expect("just computed")
                } else {
                    let items = pool_items(data, &feats.pool, 0..pool_size);
                    fresh = learner.embed(&items)?;
                    kcenter = None;
                    &fresh
                };
                if config.query_strategy == QueryStrategy::GreedyCoreset {
                    let state = kcenter.get_or_insert_with(|| KCenterState::new(pool_size));
                    state.sync(&pool, embeddings);
                    state
                        .select(&pool, config.batch_size, embeddings, config.coreset_distance)?
                        .indices
                } else {
                    query_embedding_kmeans(&pool, config.batch_size, embeddings, query_seed, config.kmeans)?
                }
            }
        };
        pool.reveal(&batch)?;
        debug_assert!(pool.check_invariants().is_ok());
        observer(&pool, &batch);
    }

    Ok(RunOutcome {
        curve: LearningCurve {
            meta,
            points,
            failed: false,
            failure: None,
        },
        models,
        acquired: pool.labeled_positions().collect(),
    })
}

/// Times a run and writes its directory.
pub fn run_and_record(
    config: &ExperimentConfig,
    data: &PreparedData,
    keywords: &KeywordList,
    seed: u64,
    dir: &Path,
) -> Result<LearningCurve> {
    let start = Instant::now();
    let curve = run_active_learning(config, data, keywords, seed)?;
    curve.write_run_dir(dir, config, start.elapsed().as_secs_f64())?;
    Ok(curve)
}

/// Trains once on the entire pool with gold labels and evaluates on test.
pub fn run_passive_baseline(config: &ExperimentConfig, data: &PreparedData, seed: u64) -> Result<Evaluation> {
    let mut learner = make_learner(&config.classifier, &data.vocab, config)?;
    passive_with_learner(data, seed, learner.as_mut())
}

pub fn passive_with_learner(data: &PreparedData, seed: u64, learner: &mut dyn Learner) -> Result<Evaluation> {
    let labeled: Vec<LabeledItem<'_>> = data
        .dataset
        .train
        .iter()
        .zip(data.pool_features.iter())
        .map(|(d, f)| LabeledItem {
            item: Item {
                id: d.id,
                text: &d.text,
                features: f,
            },
            label: d.label,
            batch: 0,
        })
        .collect();
    learner.set_vocabulary(&data.vocab);
    learner.fit(&labeled, seed)?;
    evaluate(learner, data, &data.test_features)
}
