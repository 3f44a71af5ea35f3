//! Tokenization, TF-IDF vectors, seeded random projection and the keyword
//! density heuristic used for weak labels.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::ops::Deref;
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Label, EMOJI_TOKEN, URL_TOKEN, USER_TOKEN};
use crate::error::{Error, Result};

fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\[(?:user|url|emoji)\]|\w+").expect("token regex"))
}

/// Lowercases and splits on anything that is not a word character. The
/// special tokens produced by cleaning survive as single tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    token_re()
        .find_iter(text)
        .map(|m| {
            let s = m.as_str();
            if s.starts_with('[') {
                match s.to_ascii_uppercase().as_str() {
                    "[USER]" => USER_TOKEN.to_string(),
                    "[URL]" => URL_TOKEN.to_string(),
                    _ => EMOJI_TOKEN.to_string(),
                }
            } else {
                s.to_lowercase()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TfidfOptions {
    pub min_df: usize,
    /// Use `1 + ln(tf)` instead of raw counts.
    pub sublinear_tf: bool,
}

impl Default for TfidfOptions {
    fn default() -> Self {
        TfidfOptions {
            min_df: 1,
            sublinear_tf: false,
        }
    }
}

/// A fitted TF-IDF vocabulary. Token indices follow lexicographic token
/// order, so fitting is insensitive to document order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    df: Vec<usize>,
    idf: Vec<f64>,
    n_docs: usize,
    options: TfidfOptions,
}

#[derive(Serialize, Deserialize)]
struct VocabEntry {
    token: String,
    index: usize,
    df: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    n_docs: usize,
    #[serde(default)]
    options: TfidfOptions,
    tokens: Vec<VocabEntry>,
}

fn smooth_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

impl Vocabulary {
    pub fn fit<S: AsRef<str>>(texts: &[S], options: TfidfOptions) -> Result<Self> {
        if texts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            let unique: HashSet<String> = tokenize(text.as_ref()).into_iter().collect();
            for tok in unique {
                *df.entry(tok).or_insert(0) += 1;
            }
        }
        let min_df = options.min_df.max(1);
        let kept: Vec<(String, usize)> = df.into_iter().filter(|(_, c)| *c >= min_df).collect();
        Ok(Self::from_parts(kept, texts.len(), options))
    }

    fn from_parts(entries: Vec<(String, usize)>, n_docs: usize, options: TfidfOptions) -> Self {
        let mut tokens = Vec::with_capacity(entries.len());
        let mut dfs = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (tok, df)) in entries.into_iter().enumerate() {
            index.insert(tok.clone(), i);
            tokens.push(tok);
            dfs.push(df);
        }
        let idf = dfs.iter().map(|&d| smooth_idf(n_docs, d)).collect();
        Vocabulary {
            tokens,
            index,
            df: dfs,
            idf,
            n_docs,
            options,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn options(&self) -> TfidfOptions {
        self.options
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn df(&self, token: &str) -> Option<usize> {
        self.index_of(token).map(|i| self.df[i])
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        self.index_of(token).map(|i| self.idf[i])
    }

    /// L2-normalized tf·idf vector of `text`. Out-of-vocabulary tokens are
    /// ignored; a text with none in vocabulary maps to the zero vector.
    pub fn transform(&self, text: &str) -> SparseVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for tok in tokenize(text) {
            if let Some(&i) = self.index.get(&tok) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let mut indices = Vec::with_capacity(counts.len());
        let mut values = Vec::with_capacity(counts.len());
        for (i, tf) in counts {
            let tf = if self.options.sublinear_tf { 1.0 + tf.ln() } else { tf };
            indices.push(i as u32);
            values.push(tf * self.idf[i]);
        }
        let mut v = SparseVector {
            indices,
            values,
            dim: self.len(),
        };
        v.normalize();
        v
    }

    pub fn to_json(&self) -> Result<String> {
        let file = VocabFile {
            n_docs: self.n_docs,
            options: self.options,
            tokens: self
                .tokens
                .iter()
                .enumerate()
                .map(|(i, t)| VocabEntry {
                    token: t.clone(),
                    index: i,
                    df: self.df[i],
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let mut file: VocabFile = serde_json::from_str(json)?;
        file.tokens.sort_by_key(|e| e.index);
        for (i, e) in file.tokens.iter().enumerate() {
            if e.index != i {
                return Err(Error::InvalidArgument(format!(
                    "vocabulary indices must be contiguous from 0, found {} at position {i}",
                    e.index
                )));
            }
            if e.df == 0 {
                return Err(Error::InvalidArgument(format!("token {:?} has zero df", e.token)));
            }
        }
        let entries = file.tokens.into_iter().map(|e| (e.token, e.df)).collect();
        Ok(Self::from_parts(entries, file.n_docs, file.options))
    }

    /// Writes the JSON form, creating parent directories as needed.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&json)
    }

    /// SHA-256 of the canonical JSON form, used to tie models to features.
    pub fn content_hash(&self) -> String {
        let json = self.to_json().expect("vocabulary serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// `fit_tfidf` with default options.
pub fn fit_tfidf<S: AsRef<str>>(corpus_texts: &[S]) -> Result<Vocabulary> {
    Vocabulary::fit(corpus_texts, TfidfOptions::default())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
    dim: usize,
}

impl SparseVector {
    /// Builds a vector from `(index, weight)` pairs. Pairs are sorted; a
    /// repeated index, an index beyond `dim` or a non-finite weight is
    /// rejected.
    pub fn new(mut pairs: Vec<(u32, f64)>, dim: usize) -> Result<Self> {
        pairs.sort_by_key(|p| p.0);
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidArgument(format!("duplicate index {}", w[0].0)));
            }
        }
        if let Some(&(i, _)) = pairs.last() {
            if i as usize >= dim {
                return Err(Error::InvalidArgument(format!("index {i} out of dimension {dim}")));
            }
        }
        if pairs.iter().any(|p| !p.1.is_finite()) {
            return Err(Error::InvalidArgument("non-finite weight".into()));
        }
        let (indices, values) = pairs.into_iter().unzip();
        Ok(SparseVector { indices, values, dim })
    }

    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            indices: Vec::new(),
            values: Vec::new(),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut a, mut b) = (0, 0);
        let mut acc = 0.0;
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            for v in &mut self.values {
                *v /= n;
            }
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SparseVector {
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
            dim: self.dim,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            d[i] = v;
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector(pub Vec<f64>);

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(v: Vec<f64>) -> Self {
        DenseVector(v)
    }
}

impl DenseVector {
    pub fn squared_distance(&self, other: &DenseVector) -> f64 {
        squared_distance(&self.0, &other.0)
    }

    pub fn distance(&self, other: &DenseVector) -> f64 {
        self.squared_distance(other).sqrt()
    }
}

/// Squared Euclidean distance. Eight independent partial sums let the
/// compiler vectorize the loop; the summation order is fixed, so results
/// are reproducible across runs and platforms.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            let d = x[i] - y[i];
            acc[i] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += (x - y) * (x - y);
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Seeded sparse random projection (entries `±sqrt(3/dim)` with probability
/// 1/6 each, zero otherwise). Column `j` of the projection matrix is drawn
/// from ChaCha8 stream `j` of `rng_seed`, so the map depends only on
/// `(rng_seed, dim)` and never needs to be materialized.
pub fn project_dense(v: &SparseVector, dim: usize, rng_seed: u64) -> DenseVector {
    assert!(dim >= 1, "projection dimension must be at least 1");
    let scale = (3.0 / dim as f64).sqrt();
    let mut out = vec![0.0; dim];
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for (j, x) in v.iter() {
        rng.set_stream(j as u64);
        rng.set_word_pos(0);
        for o in out.iter_mut() {
            match rng.gen_range(0u8..6) {
                0 => *o += scale * x,
                1 => *o -= scale * x,
                _ => {}
            }
        }
    }
    DenseVector(out)
}

/// Lowercase abusive-keyword lexicon used for density-based weak labels.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordList {
    keywords: HashSet<String>,
    provenance: String,
}

const SHIPPED_KEYWORDS: &str = include_str!("../data/keywords.txt");

impl KeywordList {
    pub fn new<I, S>(keywords: I, provenance: impl Into<String>) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = HashSet::new();
        for k in keywords {
            let k = k.as_ref().trim();
            if k.is_empty() {
                continue;
            }
            if k.chars().any(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!("keyword {k:?} contains whitespace")));
            }
            set.insert(k.to_lowercase());
        }
        if set.is_empty() {
            return Err(Error::InvalidArgument("keyword list is empty".into()));
        }
        Ok(KeywordList {
            keywords: set,
            provenance: provenance.into(),
        })
    }

    /// Parses the one-keyword-per-line format; `#` starts a comment.
    pub fn parse(contents: &str, provenance: impl Into<String>) -> Result<Self> {
        let lines = contents
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        Self::new(lines, provenance)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let contents = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&contents, path.display().to_string())
    }

    /// The substitute lexicon bundled with the crate.
    pub fn shipped() -> Self {
        Self::parse(SHIPPED_KEYWORDS, "bundled substitute lexicon (data/keywords.txt)")
            .expect("bundled keyword list is valid")
    }

    pub fn contains(&self, token: &str) -> bool {
        self.keywords.contains(token)
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Keywords in lexicographic order.
    pub fn sorted(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.keywords.iter().map(String::as_str).collect();
        v.sort_unstable();
        v
    }
}

/// Fraction of tokens that are keywords; 0 for a text without tokens.
pub fn keyword_density(text: &str, keywords: &KeywordList) -> f64 {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return 0.0;
    }
    let hits = tokens.iter().filter(|t| keywords.contains(t)).count();
    hits as f64 / tokens.len() as f64
}

/// Abuse when the keyword density strictly exceeds `threshold`.
pub fn weak_label(text: &str, keywords: &KeywordList, threshold: f64) -> Label {
    weak_label_from_density(keyword_density(text, keywords), threshold)
}

pub fn weak_label_from_density(density: f64, threshold: f64) -> Label {
    Label::from_bool(density > threshold)
}
