//! Experiment configuration, grid execution and result summaries.
//!
//! A grid is a TOML file naming datasets, classifiers and the lists of
//! imbalances, seed sizes, cold-start strategies, batch sizes and query
//! strategies to sweep. Every combination is run once per seed; each run
//! writes `curve.jsonl` and `manifest.json` under
//!
//! ```text
//! <out>/<dataset>/<imbalance>/<classifier>/<strategy>/s<seed_size>-<cold>-b<batch>/seed<k>/
//! ```
//!
//! and `summary.csv` at the top collects one row per experiment.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{Backend, ClassifierSpec, TrainedModel};
use crate::corpus::{
    abuse_count, clean_corpus, load_dataset, rebalance, rebalance_with_test_source, Document, Label,
    LabelScheme, RebalancedDataset, Schema,
};
use crate::engine::{
    make_learner, passive_with_learner, run_with_learner, CurvePoint, Evaluation, LearningCurve, PreparedData,
    RunMeta,
};
use crate::error::{Error, Result};
use crate::features::{KeywordList, TfidfOptions, Vocabulary};
use crate::metrics::{aggregate_runs, ConfusionCounts, RunSummary, N90};
use crate::strategies::{ColdStrategy, CoresetDistance, KMeansOptions, QueryStrategy};

/// Where TF-IDF statistics come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Fit once on the full pool text (no labels involved).
    #[default]
    Pool,
    /// Refit on the labeled texts after every acquisition.
    Labeled,
}

/// One experiment: a dataset at one imbalance, one classifier, one cold
/// start and one query strategy, repeated over `seeds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub imbalance: f64,
    pub classifier: ClassifierSpec,
    pub seed_size: usize,
    pub cold_strategy: ColdStrategy,
    pub batch_size: usize,
    pub query_strategy: QueryStrategy,
    /// Total labels, seed included. `budget - seed_size` must be a multiple
    /// of `batch_size`.
    pub budget: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Keyword density above which the heuristic seed calls a text abusive.
    pub keyword_threshold: f64,
    pub embedding_dim: usize,
    pub embedding_seed: u64,
    pub feature_mode: FeatureMode,
    pub coreset_distance: CoresetDistance,
    pub kmeans: KMeansOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: "dataset".into(),
            imbalance: 0.05,
            classifier: ClassifierSpec::default(),
            seed_size: 20,
            cold_strategy: ColdStrategy::Heuristic,
            batch_size: 50,
            query_strategy: QueryStrategy::LeastConfidence,
            budget: 2020,
            seeds: vec![1, 2, 3],
            output_dir: PathBuf::from("outputs"),
            keyword_threshold: 0.05,
            embedding_dim: crate::classifier::DEFAULT_EMBEDDING_DIM,
            embedding_seed: 7,
            feature_mode: FeatureMode::Pool,
            coreset_distance: CoresetDistance::default(),
            kmeans: KMeansOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.imbalance > 0.0 && self.imbalance < 1.0) {
            return bad(format!("imbalance must lie in (0, 1), got {}", self.imbalance));
        }
        if self.seed_size == 0 {
            return bad("seed size must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.budget < self.seed_size {
            return bad(format!("budget {} is below the seed size {}", self.budget, self.seed_size));
        }
        if !(self.budget - self.seed_size).is_multiple_of(self.batch_size) {
            return bad(format!(
                "budget {} minus seed size {} is not a multiple of batch size {}",
                self.budget, self.seed_size, self.batch_size
            ));
        }
        if !(0.0..=1.0).contains(&self.keyword_threshold) {
            return bad(format!("keyword threshold must lie in [0, 1], got {}", self.keyword_threshold));
        }
        if self.query_strategy.needs_embeddings() && self.embedding_dim == 0 {
            return bad(format!("{} needs a positive embedding dimension", self.query_strategy));
        }
        self.classifier.validate()
    }

    /// Number of labels after the seed and each acquisition.
    pub fn labeled_counts(&self) -> Vec<usize> {
        (self.seed_size..=self.budget).step_by(self.batch_size).collect()
    }

    /// Directory of this experiment's runs, relative to `output_dir`.
    pub fn experiment_dir(&self) -> PathBuf {
        self.output_dir
            .join(&self.dataset)
            .join(imbalance_dir(self.imbalance))
            .join(&self.classifier.name)
            .join(self.query_strategy.name())
            .join(format!("s{}-{}-b{}", self.seed_size, self.cold_strategy, self.batch_size))
    }

    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.experiment_dir().join(format!("seed{seed}"))
    }
}

fn imbalance_dir(imbalance: f64) -> String {
    format!("{imbalance}")
}

/// Short dataset label such as `wiki5` for the wiki data at 5%.
pub fn dataset_label(name: &str, imbalance: f64) -> String {
    let pct = imbalance * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{name}{}", pct.round() as i64)
    } else {
        format!("{name}{pct}")
    }
}

/// Parameters of the synthetic abusive-language corpus.
///
/// Abusive documents draw tokens from the shipped keyword list and from a
/// class-specific signal vocabulary at per-document intensities, so some
/// positives are easy and some barely distinguishable from the neutral
/// background. `domain_shift` moves every vocabulary by that fraction of
/// its size: two corpora at shifts 0 and 0.5 share half their words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub size: usize,
    pub imbalance: f64,
    pub neutral_vocab: usize,
    pub signal_vocab: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Per-token probability of a keyword in an abusive document, before
    /// the per-document intensity factor.
    pub keyword_rate: f64,
    /// Per-token probability of a keyword in a non-abusive document.
    pub keyword_noise: f64,
    /// Per-token probability of a word from the document's own class signal.
    pub signal_rate: f64,
    /// Per-token probability of a word from the other class's signal.
    pub signal_noise: f64,
    pub domain_shift: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            size: 60_000,
            imbalance: 0.5,
            neutral_vocab: 4000,
            signal_vocab: 20,
            min_len: 8,
            max_len: 30,
            keyword_rate: 0.12,
            keyword_noise: 0.003,
            signal_rate: 0.25,
            signal_noise: 0.02,
            domain_shift: 0.0,
            seed: 0,
        }
    }
}

const MIN_INTENSITY: f64 = 0.5;
const MAX_INTENSITY: f64 = 1.5;

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        if self.size == 0 || self.neutral_vocab == 0 || self.signal_vocab == 0 {
            return Err(Error::InvalidConfig("synthetic size and vocabularies must be positive".into()));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::InvalidConfig("synthetic lengths need 1 <= min_len <= max_len".into()));
        }
        if !(self.imbalance > 0.0 && self.imbalance < 1.0) {
            return Err(Error::InvalidConfig("synthetic imbalance must lie in (0, 1)".into()));
        }
        if !rate_ok(self.domain_shift)
            || !rate_ok(MAX_INTENSITY * (self.keyword_rate + self.signal_rate) + self.signal_noise)
            || !rate_ok(self.keyword_noise + self.signal_rate + self.signal_noise)
        {
            return Err(Error::InvalidConfig("synthetic token rates must sum to at most 1".into()));
        }
        Ok(())
    }
}

/// Generates a labeled corpus with exactly `abuse_count(imbalance, size)`
/// abusive documents, in shuffled order with sequential ids.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec, name: &str) -> Result<Vec<Document>> {
    spec.validate()?;
    let keywords = KeywordList::shipped();
    let keywords = keywords.sorted();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let neutral_off = (spec.domain_shift * spec.neutral_vocab as f64).round() as usize;
    let signal_off = (spec.domain_shift * spec.signal_vocab as f64).round() as usize;
    // Zipf-like background frequencies
    let zipf = WeightedIndex::new((0..spec.neutral_vocab).map(|r| 1.0 / (r as f64 + 1.0)))
        .expect("positive weights");

    let n_abuse = abuse_count(spec.imbalance, spec.size);
    let mut labels: Vec<Label> = (0..spec.size).map(|i| Label::from_bool(i < n_abuse)).collect();
    labels.shuffle(&mut rng);

    let mut docs = Vec::with_capacity(spec.size);
    for (id, label) in labels.into_iter().enumerate() {
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        let (kw, own, other) = if label.is_abuse() {
            let intensity = rng.gen_range(MIN_INTENSITY..MAX_INTENSITY);
            (spec.keyword_rate * intensity, spec.signal_rate * intensity, spec.signal_noise)
        } else {
            (spec.keyword_noise, spec.signal_rate, spec.signal_noise)
        };
        let (own_prefix, other_prefix) = if label.is_abuse() { ("sa", "sb") } else { ("sb", "sa") };
        let mut words = Vec::with_capacity(len);
        for _ in 0..len {
            let r: f64 = rng.gen();
            let word = if r < kw {
                keywords[rng.gen_range(0..keywords.len())].to_string()
            } else if r < kw + own {
                format!("{own_prefix}{}", signal_off + rng.gen_range(0..spec.signal_vocab))
            } else if r < kw + own + other {
                format!("{other_prefix}{}", signal_off + rng.gen_range(0..spec.signal_vocab))
            } else {
                format!("w{}", neutral_off + zipf.sample(&mut rng))
            };
            words.push(word);
        }
        let mut doc = Document::new(id as u64, words.join(" "), label, name);
        doc.raw_label = (label as u8).to_string();
        docs.push(doc);
    }
    Ok(docs)
}

/// How a dataset's documents are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    /// A CSV/TSV/JSONL file with a text and a label column.
    File {
        path: PathBuf,
        /// A separate file for the test split, same schema.
        #[serde(default)]
        test_path: Option<PathBuf>,
        text_column: String,
        label_column: String,
        scheme: LabelScheme,
        #[serde(default)]
        delimiter: Option<char>,
    },
    Synthetic {
        #[serde(default)]
        synthetic: SyntheticSpec,
    },
    /// A rebalanced dataset written by `prepare`; its imbalance is fixed.
    Prepared { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    #[serde(flatten)]
    pub source: DatasetSource,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default)]
    pub rebalance_seed: u64,
    /// Apply text normalization and deduplication after loading.
    #[serde(default = "default_true")]
    pub clean: bool,
}

fn default_pool_size() -> usize {
    20_000
}

fn default_test_size() -> usize {
    5_000
}

fn default_true() -> bool {
    true
}

impl DatasetSpec {
    pub fn synthetic(spec: SyntheticSpec, pool_size: usize, test_size: usize) -> Self {
        DatasetSpec {
            source: DatasetSource::Synthetic { synthetic: spec },
            pool_size,
            test_size,
            rebalance_seed: 0,
            clean: true,
        }
    }

    /// Loads and cleans the full source documents (train, optional test).
    pub fn load(&self, name: &str, base_dir: &Path) -> Result<(Vec<Document>, Option<Vec<Document>>)> {
        let finish = |docs: Vec<Document>| if self.clean { clean_corpus(docs) } else { docs };
        match &self.source {
            DatasetSource::File {
                path,
                test_path,
                text_column,
                label_column,
                scheme,
                delimiter,
            } => {
                let mut schema = Schema::new(text_column, label_column, *scheme);
                schema.source = Some(name.to_string());
                schema.delimiter = *delimiter;
                let train = finish(load_dataset(base_dir.join(path), &schema)?);
                let test = match test_path {
                    Some(p) => Some(finish(load_dataset(base_dir.join(p), &schema)?)),
                    None => None,
                };
                Ok((train, test))
            }
            DatasetSource::Synthetic { synthetic } => Ok((finish(generate_synthetic_corpus(synthetic, name)?), None)),
            DatasetSource::Prepared { .. } => Err(Error::InvalidConfig(format!(
                "dataset {name} is already rebalanced; use `rebalanced`"
            ))),
        }
    }

    /// The rebalanced pool and test split at `imbalance`.
    pub fn rebalanced(&self, name: &str, imbalance: f64, base_dir: &Path) -> Result<RebalancedDataset> {
        if let DatasetSource::Prepared { path } = &self.source {
            let data = RebalancedDataset::read_jsonl(base_dir.join(path), name)?;
            if (data.imbalance - imbalance).abs() > 1e-9 {
                return Err(Error::ImbalanceMismatch {
                    train: data.imbalance,
                    test: imbalance,
                });
            }
            return Ok(data);
        }
        let (docs, test) = self.load(name, base_dir)?;
        let mut data = match test {
            Some(test) => {
                rebalance_with_test_source(&docs, &test, imbalance, self.pool_size, self.test_size, self.rebalance_seed)?
            }
            None => rebalance(&docs, imbalance, self.pool_size, self.test_size, self.rebalance_seed)?,
        };
        data.name = name.to_string();
        Ok(data)
    }

    /// Imbalances this dataset runs at: a prepared file has exactly one.
    fn imbalances(&self, name: &str, grid: &[f64], base_dir: &Path) -> Result<Vec<f64>> {
        match &self.source {
            DatasetSource::Prepared { path } => {
                let data = RebalancedDataset::read_jsonl(base_dir.join(path), name)?;
                Ok(vec![data.imbalance])
            }
            _ => Ok(grid.to_vec()),
        }
    }
}

/// A source→target pair for cross-domain evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalPair {
    pub source: String,
    pub target: String,
}

/// A whole sweep, as read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Files merged underneath this one; paths are relative to it.
    pub include: Vec<PathBuf>,
    pub output_dir: PathBuf,
    /// Parallel runs; 0 uses every core.
    pub workers: usize,
    pub seeds: Vec<u64>,
    /// Total labels per run. When absent it is `seed_size + n_batches * batch_size`.
    pub budget: Option<usize>,
    pub n_batches: usize,
    pub keyword_threshold: f64,
    /// Keyword file; the shipped list when absent.
    pub keywords: Option<PathBuf>,
    pub embedding_dim: usize,
    pub embedding_seed: u64,
    pub feature_mode: FeatureMode,
    pub coreset_distance: CoresetDistance,
    pub kmeans: KMeansOptions,
    pub tfidf: TfidfOptions,
    pub imbalances: Vec<f64>,
    pub seed_sizes: Vec<usize>,
    pub cold_strategies: Vec<ColdStrategy>,
    pub batch_sizes: Vec<usize>,
    pub strategies: Vec<QueryStrategy>,
    pub datasets: BTreeMap<String, DatasetSpec>,
    pub classifiers: BTreeMap<String, ClassifierSpec>,
    pub crosseval: Vec<CrossEvalPair>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for GridConfig {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        GridConfig {
            include: Vec::new(),
            output_dir: e.output_dir,
            workers: 0,
            seeds: e.seeds,
            budget: None,
            n_batches: 40,
            keyword_threshold: e.keyword_threshold,
            keywords: None,
            embedding_dim: e.embedding_dim,
            embedding_seed: e.embedding_seed,
            feature_mode: e.feature_mode,
            coreset_distance: e.coreset_distance,
            kmeans: e.kmeans,
            tfidf: TfidfOptions::default(),
            imbalances: vec![0.5, 0.1, 0.05],
            seed_sizes: vec![e.seed_size],
            cold_strategies: vec![e.cold_strategy],
            batch_sizes: vec![e.batch_size],
            strategies: QueryStrategy::ALL.to_vec(),
            datasets: BTreeMap::new(),
            classifiers: BTreeMap::new(),
            crosseval: Vec::new(),
            base_dir: PathBuf::from("."),
        }
    }
}

/// Recursively merges `over` into `base`; tables merge, everything else
/// is replaced.
fn merge_toml(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_toml(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn load_toml_tree(path: &Path, depth: usize) -> Result<toml::Table> {
    if depth > 8 {
        return Err(Error::InvalidConfig(format!("include chain too deep at {}", path.display())));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table: toml::Table = toml::from_str(&text)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let includes = match table.remove("include") {
        None => Vec::new(),
        Some(toml::Value::Array(items)) => items
            .into_iter()
            .map(|v| match v {
                toml::Value::String(s) => Ok(s),
                other => Err(Error::InvalidConfig(format!("include entries must be strings, got {other}"))),
            })
            .collect::<Result<_>>()?,
        Some(other) => return Err(Error::InvalidConfig(format!("include must be an array, got {other}"))),
    };
    let mut merged = toml::Table::new();
    for inc in includes {
        merge_toml(&mut merged, load_toml_tree(&dir.join(inc), depth + 1)?);
    }
    merge_toml(&mut merged, table);
    Ok(merged)
}

impl GridConfig {
    /// Reads a grid file and its includes. Relative paths inside are
    /// resolved against the top-level file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let table = load_toml_tree(path, 0)?;
        let mut grid: GridConfig = toml::Value::Table(table).try_into()?;
        grid.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if grid.base_dir.as_os_str().is_empty() {
            grid.base_dir = PathBuf::from(".");
        }
        grid.output_dir = grid.base_dir.join(&grid.output_dir);
        Ok(grid)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Classifiers by name, defaulting to the logistic linear model.
    pub fn classifier_specs(&self) -> Vec<ClassifierSpec> {
        if self.classifiers.is_empty() {
            return vec![ClassifierSpec::default()];
        }
        self.classifiers
            .iter()
            .map(|(name, spec)| ClassifierSpec {
                name: name.clone(),
                ..spec.clone()
            })
            .collect()
    }

    pub fn keyword_list(&self) -> Result<KeywordList> {
        match &self.keywords {
            Some(p) => KeywordList::from_file(self.base_dir.join(p)),
            None => Ok(KeywordList::shipped()),
        }
    }

    fn budget_for(&self, seed_size: usize, batch_size: usize) -> usize {
        self.budget.unwrap_or(seed_size + self.n_batches * batch_size)
    }

    /// Every experiment of the grid on one prepared dataset.
    pub fn experiments(&self, dataset: &str, imbalance: f64) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for classifier in self.classifier_specs() {
            for &strategy in &self.strategies {
                for &cold in &self.cold_strategies {
                    for &seed_size in &self.seed_sizes {
                        for &batch_size in &self.batch_sizes {
                            out.push(ExperimentConfig {
                                dataset: dataset.to_string(),
                                imbalance,
                                classifier: classifier.clone(),
                                seed_size,
                                cold_strategy: cold,
                                batch_size,
                                query_strategy: strategy,
                                budget: self.budget_for(seed_size, batch_size),
                                seeds: self.seeds.clone(),
                                output_dir: self.output_dir.clone(),
                                keyword_threshold: self.keyword_threshold,
                                embedding_dim: self.embedding_dim,
                                embedding_seed: self.embedding_seed,
                                feature_mode: self.feature_mode,
                                coreset_distance: self.coreset_distance,
                                kmeans: self.kmeans,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::InvalidConfig("grid names no datasets".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("grid names no seeds".into()));
        }
        for pair in &self.crosseval {
            for name in [&pair.source, &pair.target] {
                if !self.datasets.contains_key(name) {
                    return Err(Error::InvalidConfig(format!("crosseval names unknown dataset {name}")));
                }
            }
        }
        for name in self.datasets.keys() {
            for exp in self.experiments(name, 0.5) {
                exp.validate()?;
            }
        }
        Ok(())
    }

    fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))
    }

    /// Rebalances every dataset at every grid imbalance.
    pub fn prepare(&self) -> Result<Vec<RebalancedDataset>> {
        let mut out = Vec::new();
        for (name, spec) in &self.datasets {
            for imb in spec.imbalances(name, &self.imbalances, &self.base_dir)? {
                out.push(spec.rebalanced(name, imb, &self.base_dir)?);
            }
        }
        Ok(out)
    }
}

/// Replaces `{vocab}` in a plugin command with the vocabulary path.
fn with_vocab_path(spec: &ClassifierSpec, vocab: &Path) -> ClassifierSpec {
    let mut spec = spec.clone();
    if let Backend::Plugin { command, .. } = &mut spec.backend {
        for arg in command.iter_mut() {
            *arg = arg.replace("{vocab}", &vocab.display().to_string());
        }
    }
    spec
}

/// Passive full-pool baselines of one prepared dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassiveReport {
    pub dataset: String,
    pub imbalance: f64,
    /// Mean test F1 per classifier across seeds.
    pub f1_20k: BTreeMap<String, f64>,
    pub per_seed: BTreeMap<String, Vec<(u64, Evaluation)>>,
    /// Best classifier's F1, the N_90 reference.
    pub f1_ref: f64,
}

impl PassiveReport {
    pub fn path(output_dir: &Path, dataset: &str, imbalance: f64) -> PathBuf {
        output_dir.join(dataset).join(imbalance_dir(imbalance)).join("passive.json")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &serde_json::to_string_pretty(self)?)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Trains each classifier on the full labeled pool for each seed.
pub fn passive_baselines(
    data: &PreparedData,
    classifiers: &[ClassifierSpec],
    template: &ExperimentConfig,
    seeds: &[u64],
) -> Result<PassiveReport> {
    let jobs: Vec<(&ClassifierSpec, u64)> = classifiers
        .iter()
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results: Vec<Result<Evaluation>> = jobs
        .par_iter()
        .map(|(spec, seed)| {
            let mut learner = make_learner(spec, &data.vocab, template)?;
            passive_with_learner(data, *seed, learner.as_mut())
        })
        .collect();
    let mut per_seed: BTreeMap<String, Vec<(u64, Evaluation)>> = BTreeMap::new();
    for ((spec, seed), res) in jobs.iter().zip(results) {
        per_seed.entry(spec.name.clone()).or_default().push((*seed, res?));
    }
    let f1_20k: BTreeMap<String, f64> = per_seed
        .iter()
        .map(|(k, v)| (k.clone(), v.iter().map(|(_, e)| e.macro_f1).sum::<f64>() / v.len() as f64))
        .collect();
    let f1_ref = f1_20k.values().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(PassiveReport {
        dataset: data.dataset.name.clone(),
        imbalance: data.dataset.imbalance,
        f1_20k,
        per_seed,
        f1_ref,
    })
}

/// Aggregated result of one experiment across its seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub meta: RunMeta,
    pub summary: RunSummary,
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub classifier: String,
    #[serde(rename = "F1_20k")]
    pub f1_20k: Option<f64>,
    #[serde(rename = "F1_AL")]
    pub f1_al: Option<f64>,
    #[serde(rename = "N_90")]
    pub n90: String,
    pub imbalance: f64,
    pub strategy: String,
    pub cold_strategy: String,
    pub seed_size: usize,
    pub batch_size: usize,
    pub n_runs: usize,
    pub n_failed: usize,
    pub f1_al_successful_mean: Option<f64>,
    pub f1_al_all_mean: Option<f64>,
    pub f1_ref: Option<f64>,
}

impl ExperimentSummary {
    pub fn row(&self) -> SummaryRow {
        let m = &self.meta;
        let s = &self.summary;
        let round = |x: Option<f64>| x.map(|v| (v * 1e4).round() / 1e4);
        SummaryRow {
            dataset: dataset_label(&m.dataset, m.imbalance),
            classifier: m.classifier.clone(),
            f1_20k: round(s.f1_20k),
            f1_al: round(s.f1_al),
            n90: match s.n90 {
                Some(N90::Reached(n)) => n.to_string(),
                Some(N90::NotReached) => "not reached".into(),
                None => String::new(),
            },
            imbalance: m.imbalance,
            strategy: m.query_strategy.clone(),
            cold_strategy: m.cold_strategy.clone(),
            seed_size: m.seed_size,
            batch_size: m.batch_size,
            n_runs: s.n_runs,
            n_failed: s.n_failed,
            f1_al_successful_mean: round(s.f1_al_successful_mean),
            f1_al_all_mean: round(s.f1_al_all_mean),
            f1_ref: round(s.f1_ref),
        }
    }
}

pub fn write_summary_csv(path: impl AsRef<Path>, summaries: &[ExperimentSummary]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for s in summaries {
        w.serialize(s.row())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the aggregate files of one experiment next to its seed runs.
fn write_experiment_files(dir: &Path, summary: &ExperimentSummary) -> Result<()> {
    write_file(&dir.join("summary.json"), &serde_json::to_string_pretty(summary)?)?;
    let mut mean = csv::Writer::from_path(dir.join("curve_mean.csv"))?;
    mean.write_record(["labeled_count", "mean_f1", "std_f1", "mean_labeled_abuse_fraction"])?;
    for p in &summary.summary.mean_curve {
        mean.write_record(&[
            p.labeled_count.to_string(),
            p.mean_f1.to_string(),
            p.std_f1.to_string(),
            p.mean_labeled_abuse_fraction.to_string(),
        ])?;
    }
    mean.flush().map_err(|e| Error::io(dir, e))?;
    let mut seeds = csv::Writer::from_path(dir.join("seeds.csv"))?;
    seeds.write_record(["seed", "failed", "f1_al", "n90", "final_f1", "final_labeled_abuse_fraction"])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for s in &summary.summary.seeds {
        seeds.write_record(&[
            s.seed.to_string(),
            s.failed.to_string(),
            opt(s.f1_al),
            s.n90.map(|n| n.to_string()).unwrap_or_default(),
            opt(s.final_f1),
            opt(s.final_labeled_abuse_fraction),
        ])?;
    }
    seeds.flush().map_err(|e| Error::io(dir, e))
}

/// Runs one seed, turning errors into a failed curve so the grid goes on.
fn run_seed(config: &ExperimentConfig, data: &PreparedData, keywords: &KeywordList, seed: u64) -> LearningCurve {
    let start = Instant::now();
    let curve = make_learner(&config.classifier, &data.vocab, config)
        .and_then(|mut l| run_with_learner(config, data, keywords, seed, l.as_mut(), false))
        .map(|o| o.curve)
        .unwrap_or_else(|e| {
            log::warn!("{} {} seed {seed} failed: {e}", config.dataset, config.query_strategy);
            LearningCurve {
                meta: RunMeta::from_config(config, seed),
                points: Vec::new(),
                failed: true,
                failure: Some(e.to_string()),
            }
        });
    if let Err(e) = curve.write_run_dir(config.run_dir(seed), config, start.elapsed().as_secs_f64()) {
        log::warn!("cannot record {}: {e}", config.run_dir(seed).display());
    }
    curve
}

/// Everything a finished grid produced.
#[derive(Debug, Clone)]
pub struct GridReport {
    pub passive: Vec<PassiveReport>,
    pub experiments: Vec<ExperimentSummary>,
    pub curves: Vec<LearningCurve>,
}

/// Runs every experiment of the grid and writes all outputs.
pub fn run_grid(grid: &GridConfig) -> Result<GridReport> {
    grid.validate()?;
    let keywords = grid.keyword_list()?;
    let pool = grid.thread_pool()?;
    let classifiers = grid.classifier_specs();
    let template = ExperimentConfig {
        embedding_dim: grid.embedding_dim,
        embedding_seed: grid.embedding_seed,
        ..Default::default()
    };

    let mut report = GridReport {
        passive: Vec::new(),
        experiments: Vec::new(),
        curves: Vec::new(),
    };
    for (name, spec) in &grid.datasets {
        for imbalance in spec.imbalances(name, &grid.imbalances, &grid.base_dir)? {
            let data = PreparedData::new(spec.rebalanced(name, imbalance, &grid.base_dir)?, grid.tfidf)?;
            let data_dir = grid.output_dir.join(name).join(imbalance_dir(imbalance));
            let vocab_path = data_dir.join("vocab.json");
            data.vocab.save(&vocab_path)?;
            let classifiers: Vec<ClassifierSpec> = classifiers.iter().map(|c| with_vocab_path(c, &vocab_path)).collect();
            log::info!(
                "{name} at {imbalance}: pool {}, test {}, vocabulary {}",
                data.dataset.train.len(),
                data.dataset.test.len(),
                data.vocab.len()
            );

            let passive = pool.install(|| passive_baselines(&data, &classifiers, &template, &grid.seeds))?;
            passive.save(PassiveReport::path(&grid.output_dir, name, imbalance))?;

            let experiments: Vec<ExperimentConfig> = grid
                .experiments(name, imbalance)
                .into_iter()
                .map(|e| ExperimentConfig {
                    classifier: with_vocab_path(&e.classifier, &vocab_path),
                    ..e
                })
                .collect();
            let jobs: Vec<(usize, u64)> = (0..experiments.len())
                .flat_map(|i| grid.seeds.iter().map(move |&s| (i, s)))
                .collect();
            let total = jobs.len();
            let done = std::sync::atomic::AtomicUsize::new(0);
            let curves: Vec<LearningCurve> = pool.install(|| {
                jobs.par_iter()
                    .map(|&(i, seed)| {
                        let c = run_seed(&experiments[i], &data, &keywords, seed);
                        let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                        log::info!("[{k}/{total}] {} {} seed {seed}", experiments[i].classifier.name, experiments[i].query_strategy);
                        c
                    })
                    .collect()
            });

            for (i, exp) in experiments.iter().enumerate() {
                let runs: Vec<LearningCurve> = jobs
                    .iter()
                    .zip(&curves)
                    .filter(|((j, _), _)| *j == i)
                    .map(|(_, c)| c.clone())
                    .collect();
                let summary = ExperimentSummary {
                    meta: RunMeta { seed: 0, ..RunMeta::from_config(exp, 0) },
                    summary: aggregate_runs(
                        &runs,
                        passive.f1_20k.get(&exp.classifier.name).copied(),
                        Some(passive.f1_ref),
                    )?,
                };
                write_experiment_files(&exp.experiment_dir(), &summary)?;
                report.experiments.push(summary);
            }
            report.curves.extend(curves);
            report.passive.push(passive);
        }
    }
    write_summary_csv(grid.output_dir.join("summary.csv"), &report.experiments)?;
    Ok(report)
}

fn find_run_dirs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries: Vec<PathBuf> = entries
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            if path.join("manifest.json").is_file() {
                out.push(path);
            } else {
                find_run_dirs(&path, out)?;
            }
        }
    }
    Ok(())
}

/// Rebuilds every experiment summary from the run directories under
/// `out_dir` and rewrites `summary.csv`.
pub fn summarize(out_dir: impl AsRef<Path>) -> Result<Vec<ExperimentSummary>> {
    let out_dir = out_dir.as_ref();
    let mut dirs = Vec::new();
    find_run_dirs(out_dir, &mut dirs)?;
    let mut groups: BTreeMap<PathBuf, Vec<LearningCurve>> = BTreeMap::new();
    let mut metas: BTreeMap<PathBuf, RunMeta> = BTreeMap::new();
    for dir in dirs {
        let (curve, manifest) = LearningCurve::read_run_dir(&dir)?;
        let exp_dir = dir.parent().map(Path::to_path_buf).unwrap_or_default();
        metas.entry(exp_dir.clone()).or_insert(RunMeta {
            seed: 0,
            ..manifest.meta.clone()
        });
        groups.entry(exp_dir).or_default().push(curve);
    }
    let mut passive_cache: BTreeMap<PathBuf, Option<PassiveReport>> = BTreeMap::new();
    let mut out = Vec::new();
    for (dir, runs) in groups {
        let meta = metas.remove(&dir).expect("meta recorded with group");
        let ppath = PassiveReport::path(out_dir, &meta.dataset, meta.imbalance);
        let passive = passive_cache
            .entry(ppath.clone())
            .or_insert_with(|| PassiveReport::load(&ppath).ok())
            .clone();
        let (f1_20k, f1_ref) = match &passive {
            Some(p) => (p.f1_20k.get(&meta.classifier).copied(), Some(p.f1_ref)),
            None => (None, None),
        };
        let summary = ExperimentSummary {
            meta,
            summary: aggregate_runs(&runs, f1_20k, f1_ref)?,
        };
        write_experiment_files(&dir, &summary)?;
        out.push(summary);
    }
    write_summary_csv(out_dir.join("summary.csv"), &out)?;
    Ok(out)
}

/// Re-evaluates the models of a source-domain run on a target test set,
/// featurized with the source vocabulary. Both sides must share the
/// imbalance ratio.
pub fn cross_dataset_eval(
    models: &[TrainedModel],
    source: &LearningCurve,
    source_vocab: &Vocabulary,
    target: &RebalancedDataset,
) -> Result<LearningCurve> {
    if (source.meta.imbalance - target.imbalance).abs() > 1e-9 {
        return Err(Error::ImbalanceMismatch {
            train: source.meta.imbalance,
            test: target.imbalance,
        });
    }
    if models.len() != source.points.len() {
        return Err(Error::MisalignedCurves(format!(
            "{} models for {} curve points",
            models.len(),
            source.points.len()
        )));
    }
    let hash = source_vocab.content_hash();
    let feats: Vec<_> = target.test.iter().map(|d| source_vocab.transform(&d.text)).collect();
    let gold: Vec<Label> = target.test.iter().map(|d| d.label).collect();
    let mut points = Vec::with_capacity(models.len());
    for (model, src) in models.iter().zip(&source.points) {
        if model.vocab_hash != hash {
            return Err(Error::InvalidArgument("model was not trained on the source vocabulary".into()));
        }
        let predicted: Vec<Label> = feats.iter().map(|x| model.predict(x)).collect();
        let eval = Evaluation::from_counts(ConfusionCounts::from_predictions(&gold, &predicted))?;
        points.push(CurvePoint {
            macro_f1: eval.macro_f1,
            fpr: eval.fpr,
            fnr: eval.fnr,
            counts: eval.counts,
            ..src.clone()
        });
    }
    Ok(LearningCurve {
        meta: RunMeta {
            dataset: format!("{}-to-{}", source.meta.dataset, target.name),
            ..source.meta.clone()
        },
        points,
        failed: source.failed,
        failure: source.failure.clone(),
    })
}

/// Runs every crosseval pair of the grid with builtin classifiers and
/// writes the curves under `<out>/crosseval/`.
pub fn run_crosseval(grid: &GridConfig) -> Result<Vec<ExperimentSummary>> {
    grid.validate()?;
    if grid.crosseval.is_empty() {
        return Err(Error::InvalidConfig("grid has no crosseval pairs".into()));
    }
    let keywords = grid.keyword_list()?;
    let pool = grid.thread_pool()?;
    let classifiers: Vec<ClassifierSpec> = grid
        .classifier_specs()
        .into_iter()
        .filter(|c| c.backend == Backend::Builtin)
        .collect();
    let out_root = grid.output_dir.join("crosseval");
    let mut summaries = Vec::new();
    for pair in &grid.crosseval {
        let src_spec = &grid.datasets[&pair.source];
        let tgt_spec = &grid.datasets[&pair.target];
        for &imbalance in &grid.imbalances {
            let source = PreparedData::new(src_spec.rebalanced(&pair.source, imbalance, &grid.base_dir)?, grid.tfidf)?;
            let target = Arc::new(tgt_spec.rebalanced(&pair.target, imbalance, &grid.base_dir)?);
            let label = format!("{}-to-{}", pair.source, pair.target);

            // reference: full source pool evaluated on the target
            let target_view = PreparedData {
                dataset: Arc::new(RebalancedDataset {
                    train: source.dataset.train.clone(),
                    ..(*target).clone()
                }),
                vocab: source.vocab.clone(),
                pool_features: source.pool_features.clone(),
                test_features: Arc::new(target.test.iter().map(|d| source.vocab.transform(&d.text)).collect()),
                tfidf: grid.tfidf,
            };
            let template = ExperimentConfig {
                embedding_dim: grid.embedding_dim,
                embedding_seed: grid.embedding_seed,
                ..Default::default()
            };
            let passive = pool.install(|| passive_baselines(&target_view, &classifiers, &template, &grid.seeds))?;

            for exp in grid.experiments(&label, imbalance) {
                if exp.classifier.backend != Backend::Builtin {
                    continue;
                }
                let exp = ExperimentConfig {
                    output_dir: out_root.clone(),
                    ..exp
                };
                let src_exp = ExperimentConfig {
                    dataset: pair.source.clone(),
                    ..exp.clone()
                };
                let curves: Vec<LearningCurve> = pool.install(|| {
                    grid.seeds
                        .par_iter()
                        .map(|&seed| -> Result<LearningCurve> {
                            let mut learner = make_learner(&src_exp.classifier, &source.vocab, &src_exp)?;
                            let outcome = run_with_learner(&src_exp, &source, &keywords, seed, learner.as_mut(), true)?;
                            let mut curve = cross_dataset_eval(&outcome.models, &outcome.curve, &source.vocab, &target)?;
                            curve.meta.dataset = label.clone();
                            curve.write_run_dir(exp.run_dir(seed), &exp, 0.0)?;
                            Ok(curve)
                        })
                        .collect::<Result<Vec<_>>>()
                })?;
                let summary = ExperimentSummary {
                    meta: RunMeta::from_config(&exp, 0),
                    summary: aggregate_runs(
                        &curves,
                        passive.f1_20k.get(&exp.classifier.name).copied(),
                        Some(passive.f1_ref),
                    )?,
                };
                write_experiment_files(&exp.experiment_dir(), &summary)?;
                summaries.push(summary);
            }
        }
    }
    write_summary_csv(out_root.join("summary.csv"), &summaries)?;
    Ok(summaries)
}
