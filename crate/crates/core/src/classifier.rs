//! The classifier contract used by the active-learning loop and the builtin
//! linear learner.
//!
//! Every [`Learner::fit`] call trains from scratch: a model is a function of
//! the spec, the labeled set and the seed only. The builtin learner minimizes
//! an L2-regularized logistic (or hinge) loss over TF-IDF vectors with seeded
//! stochastic gradient descent.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::{project_dense, DenseVector, SparseVector, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Logistic,
    /// Hinge loss; probabilities are the sigmoid of the raw margin.
    Hinge,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    Builtin,
    /// An external process speaking the line-oriented JSON protocol.
    Plugin {
        command: Vec<String>,
        #[serde(default = "default_plugin_timeout")]
        timeout_secs: u64,
    },
}

fn default_plugin_timeout() -> u64 {
    600
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierSpec {
    pub name: String,
    pub backend: Backend,
    pub loss: Loss,
    /// L2 regularization strength.
    pub l2: f64,
    pub epochs: usize,
    /// Initial step size; decays as `lr / (1 + t / n)` over `t` updates.
    pub learning_rate: f64,
    /// Fraction of each labeled batch held out when early stopping is on.
    pub validation_fraction: f64,
    pub early_stopping: bool,
    pub seed: u64,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec {
            name: "linear".into(),
            backend: Backend::Builtin,
            loss: Loss::Logistic,
            l2: 1e-4,
            epochs: 20,
            learning_rate: 1.0,
            validation_fraction: 0.1,
            early_stopping: false,
            seed: 0,
        }
    }
}

impl ClassifierSpec {
    pub fn hinge() -> Self {
        ClassifierSpec {
            name: "linear-hinge".into(),
            loss: Loss::Hinge,
            ..Default::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ClassifierSpec {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.validation_fraction) {
            return Err(Error::InvalidConfig(format!(
                "validation fraction must lie in [0, 0.5], got {}",
                self.validation_fraction
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if !(self.l2 >= 0.0) || self.l2 * self.learning_rate >= 1.0 {
            return Err(Error::InvalidConfig(
                "l2 must be non-negative with l2 * learning_rate < 1".into(),
            ));
        }
        if let Backend::Plugin { command, .. } = &self.backend {
            if command.is_empty() {
                return Err(Error::InvalidConfig("plugin command is empty".into()));
            }
        }
        Ok(())
    }
}

/// One labeled training example. `batch` is the acquisition batch the
/// example arrived in (0 for the seed).
#[derive(Debug, Clone, Copy)]
pub struct TrainingExample<'a> {
    pub id: u64,
    pub features: &'a SparseVector,
    pub label: Label,
    pub batch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// SHA-256 over the sorted `(id, label)` pairs of the training set.
    pub fingerprint: String,
    pub vocab_hash: String,
    pub spec: ClassifierSpec,
    pub n_train: usize,
    pub epochs_run: usize,
    #[serde(default)]
    pub iteration: Option<usize>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(-z))` without overflow.
fn log1p_exp_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// Per-example loss value at margin `m` for sign `y ∈ {-1, +1}`.
pub fn loss_value(loss: Loss, margin: f64, y: f64) -> f64 {
    match loss {
        Loss::Logistic => log1p_exp_neg(y * margin),
        Loss::Hinge => (1.0 - y * margin).max(0.0),
    }
}

/// Derivative of the per-example loss with respect to the margin.
pub fn loss_derivative(loss: Loss, margin: f64, y: f64) -> f64 {
    match loss {
        Loss::Logistic => -y * sigmoid(-y * margin),
        Loss::Hinge => {
            if y * margin < 1.0 {
                -y
            } else {
                0.0
            }
        }
    }
}

/// Full-batch regularized objective
/// `mean_i loss(y_i (w·x_i + b)) + l2/2 ||w||²` with its analytic gradient
/// `(value, dJ/dw, dJ/db)`. SGD steps use the same per-example derivative.
pub fn objective_and_gradient(
    loss: Loss,
    weights: &[f64],
    bias: f64,
    examples: &[(SparseVector, Label)],
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = examples.len().max(1) as f64;
    let mut value = 0.0;
    let mut grad: Vec<f64> = weights.iter().map(|w| l2 * w).collect();
    let mut grad_b = 0.0;
    for (x, label) in examples {
        let y = label.sign();
        let m = x.dot_dense(weights) + bias;
        value += loss_value(loss, m, y) / n;
        let d = loss_derivative(loss, m, y) / n;
        for (i, xi) in x.iter() {
            grad[i] += d * xi;
        }
        grad_b += d;
    }
    value += 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    (value, grad, grad_b)
}

pub fn training_fingerprint(pairs: impl IntoIterator<Item = (u64, Label)>) -> String {
    let mut v: Vec<(u64, Label)> = pairs.into_iter().collect();
    v.sort_unstable();
    let mut h = Sha256::new();
    for (id, label) in v {
        h.update(id.to_le_bytes());
        h.update([label as u8]);
    }
    hex::encode(h.finalize())
}

fn check_classes(examples: &[TrainingExample<'_>]) -> Result<()> {
    let first = examples.first().ok_or(Error::EmptyTrainingSet)?.label;
    if examples.iter().all(|e| e.label == first) {
        return Err(Error::SingleClass(first));
    }
    Ok(())
}

/// Splits off the last `fraction` of every batch (in id order) for
/// validation.
fn holdout<'a>(
    examples: &[TrainingExample<'a>],
    fraction: f64,
) -> (Vec<TrainingExample<'a>>, Vec<TrainingExample<'a>>) {
    let mut batches: Vec<usize> = examples.iter().map(|e| e.batch).collect();
    batches.sort_unstable();
    batches.dedup();
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for b in batches {
        let members: Vec<_> = examples.iter().filter(|e| e.batch == b).copied().collect();
        let n_valid = (members.len() as f64 * fraction).floor() as usize;
        let cut = members.len() - n_valid;
        train.extend_from_slice(&members[..cut]);
        valid.extend_from_slice(&members[cut..]);
    }
    (train, valid)
}

fn mean_loss(loss: Loss, w: &[f64], b: f64, examples: &[TrainingExample<'_>]) -> f64 {
    let total: f64 = examples
        .iter()
        .map(|e| loss_value(loss, e.features.dot_dense(w) + b, e.label.sign()))
        .sum();
    total / examples.len().max(1) as f64
}

/// Trains a fresh builtin model on exactly `examples`.
///
/// Examples are put into id order before training, so the result does not
/// depend on the order in which labels were acquired.
pub fn fit(spec: &ClassifierSpec, examples: &[TrainingExample<'_>], vocab: &Vocabulary) -> Result<TrainedModel> {
    fit_with_dim(spec, examples, vocab.len(), vocab.content_hash())
}

pub(crate) fn fit_with_dim(
    spec: &ClassifierSpec,
    examples: &[TrainingExample<'_>],
    dim: usize,
    vocab_hash: String,
) -> Result<TrainedModel> {
    spec.validate()?;
    check_classes(examples)?;
    for e in examples {
        if e.features.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: e.features.dim(),
            });
        }
    }
    let mut sorted: Vec<TrainingExample<'_>> = examples.to_vec();
    sorted.sort_by_key(|e| e.id);

    let use_validation = spec.early_stopping && spec.validation_fraction > 0.0;
    let (train, valid) = if use_validation {
        holdout(&sorted, spec.validation_fraction)
    } else {
        (sorted.clone(), Vec::new())
    };
    check_classes(&train)?;

    let n = train.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..n).collect();
    // w = scale * v keeps the L2 shrinkage O(1) per step
    let mut v = vec![0.0; dim];
    let mut scale = 1.0;
    let mut bias = 0.0;
    let mut t = 0usize;

    let mut best: Option<(f64, Vec<f64>, f64, usize)> = None;
    let mut epochs_run = 0;

    for epoch in 0..spec.epochs {
        order.shuffle(&mut rng);
        for &k in &order {
            let ex = &train[k];
            let y = ex.label.sign();
            let eta = spec.learning_rate / (1.0 + t as f64 / n as f64);
            let margin = scale * ex.features.dot_dense(&v) + bias;
            let g = loss_derivative(spec.loss, margin, y);
            scale *= 1.0 - eta * spec.l2;
            if g != 0.0 {
                let step = eta * g / scale;
                for (i, xi) in ex.features.iter() {
                    v[i] -= step * xi;
                }
            }
            bias -= eta * g;
            if scale < 1e-9 {
                for w in &mut v {
                    *w *= scale;
                }
                scale = 1.0;
            }
            t += 1;
        }
        epochs_run = epoch + 1;

        if use_validation && !valid.is_empty() {
            let w: Vec<f64> = v.iter().map(|x| x * scale).collect();
            let val = mean_loss(spec.loss, &w, bias, &valid);
            match &best {
                Some((best_val, ..)) if val >= *best_val => break,
                _ => best = Some((val, w, bias, epochs_run)),
            }
        }
    }

    let (weights, bias, epochs_run) = match best {
        Some((_, w, b, e)) => (w, b, e),
        None => (v.iter().map(|x| x * scale).collect(), bias, epochs_run),
    };
    if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
        return Err(Error::InvalidArgument("training diverged to non-finite weights".into()));
    }

    Ok(TrainedModel {
        weights,
        bias,
        fingerprint: training_fingerprint(examples.iter().map(|e| (e.id, e.label))),
        vocab_hash,
        spec: spec.clone(),
        n_train: examples.len(),
        epochs_run,
        iteration: None,
    })
}

impl TrainedModel {
    pub fn margin(&self, x: &SparseVector) -> f64 {
        x.dot_dense(&self.weights) + self.bias
    }

    /// `[p(non-abuse), p(abuse)]`, with `p(abuse) = sigmoid(margin)` clamped
    /// into the open interval so both entries stay strictly positive.
    pub fn predict_proba(&self, x: &SparseVector) -> [f64; 2] {
        proba_from_margin(self.margin(x))
    }

    pub fn predict(&self, x: &SparseVector) -> Label {
        Label::from_bool(self.predict_proba(x)[1] > 0.5)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&json)
    }
}

pub fn proba_from_margin(margin: f64) -> [f64; 2] {
    let p1 = sigmoid(margin).clamp(f64::EPSILON, 1.0 - f64::EPSILON);
    [1.0 - p1, p1]
}

/// Batch form of [`TrainedModel::predict_proba`].
pub fn predict_proba(model: &TrainedModel, xs: &[&SparseVector]) -> Vec<[f64; 2]> {
    xs.iter().map(|x| model.predict_proba(x)).collect()
}

/// A pool or test item as seen by a learner: builtin backends read the
/// TF-IDF features, external ones the text.
#[derive(Debug, Clone, Copy)]
pub struct Item<'a> {
    pub id: u64,
    pub text: &'a str,
    pub features: &'a SparseVector,
}

#[derive(Debug, Clone, Copy)]
pub struct LabeledItem<'a> {
    pub item: Item<'a>,
    pub label: Label,
    pub batch: usize,
}

/// The classifier contract the engine drives.
pub trait Learner: Send {
    /// Discards any previous model and trains on exactly `examples`.
    fn fit(&mut self, examples: &[LabeledItem<'_>], seed: u64) -> Result<()>;

    fn predict_proba(&mut self, items: &[Item<'_>]) -> Result<Vec<[f64; 2]>>;

    fn embed(&mut self, items: &[Item<'_>]) -> Result<Vec<DenseVector>>;

    fn embedding_dim(&self) -> usize;

    /// Whether embeddings are independent of the trained model, so callers
    /// may compute them once per run.
    fn static_embeddings(&self) -> bool;

    /// The current model, when the backend exposes one.
    fn model(&self) -> Option<&TrainedModel> {
        None
    }

    /// Called before `fit` with the vocabulary the item features come from.
    fn set_vocabulary(&mut self, _vocab: &Vocabulary) {}
}

/// Default dimension of projected embeddings.
pub const DEFAULT_EMBEDDING_DIM: usize = 256;

/// The in-process linear learner.
#[derive(Debug, Clone)]
pub struct BuiltinLearner {
    spec: ClassifierSpec,
    dim: usize,
    vocab_hash: String,
    embedding_dim: usize,
    embedding_seed: u64,
    model: Option<TrainedModel>,
}

impl BuiltinLearner {
    pub fn new(spec: ClassifierSpec, vocab: &Vocabulary, embedding_dim: usize, embedding_seed: u64) -> Self {
        BuiltinLearner {
            spec,
            dim: vocab.len(),
            vocab_hash: vocab.content_hash(),
            embedding_dim,
            embedding_seed,
            model: None,
        }
    }

    pub fn take_model(&mut self) -> Option<TrainedModel> {
        self.model.take()
    }
}

/// Projects TF-IDF features to dense embeddings of a fixed dimension.
pub fn embed(features: &[&SparseVector], dim: usize, rng_seed: u64) -> Result<Vec<DenseVector>> {
    if let Some(first) = features.first() {
        if let Some(bad) = features.iter().find(|f| f.dim() != first.dim()) {
            return Err(Error::DimensionMismatch {
                expected: first.dim(),
                actual: bad.dim(),
            });
        }
    }
    Ok(features.iter().map(|f| project_dense(f, dim, rng_seed)).collect())
}

impl Learner for BuiltinLearner {
    fn fit(&mut self, examples: &[LabeledItem<'_>], seed: u64) -> Result<()> {
        self.model = None;
        let examples: Vec<TrainingExample<'_>> = examples
            .iter()
            .map(|e| TrainingExample {
                id: e.item.id,
                features: e.item.features,
                label: e.label,
                batch: e.batch,
            })
            .collect();
        let model = fit_with_dim(&self.spec.with_seed(seed), &examples, self.dim, self.vocab_hash.clone())?;
        self.model = Some(model);
        Ok(())
    }

    fn predict_proba(&mut self, items: &[Item<'_>]) -> Result<Vec<[f64; 2]>> {
        let model = self.model.as_ref().ok_or(Error::Untrained)?;
        Ok(items.iter().map(|it| model.predict_proba(it.features)).collect())
    }

    fn embed(&mut self, items: &[Item<'_>]) -> Result<Vec<DenseVector>> {
        let feats: Vec<&SparseVector> = items.iter().map(|it| it.features).collect();
        embed(&feats, self.embedding_dim, self.embedding_seed)
    }

    fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    fn static_embeddings(&self) -> bool {
        true
    }

    fn model(&self) -> Option<&TrainedModel> {
        self.model.as_ref()
    }

    fn set_vocabulary(&mut self, vocab: &Vocabulary) {
        if vocab.len() != self.dim || self.vocab_hash.is_empty() {
            self.dim = vocab.len();
            self.vocab_hash = vocab.content_hash();
        }
    }
}
