//! Dataset ingestion, cleaning, label binarization and class-imbalance
//! rebalancing.
//!
//! A source dataset is loaded into [`Document`]s, cleaned with
//! [`clean_corpus`], and then [`rebalance`]d into a fixed-size unlabeled pool
//! plus a held-out test set that share the same abuse prevalence.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary gold label. `Abuse` is the positive class everywhere in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    NonAbuse = 0,
    Abuse = 1,
}

impl Label {
    pub fn from_bool(abuse: bool) -> Self {
        if abuse {
            Label::Abuse
        } else {
            Label::NonAbuse
        }
    }

    pub fn is_abuse(self) -> bool {
        self == Label::Abuse
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Abuse => Label::NonAbuse,
            Label::NonAbuse => Label::Abuse,
        }
    }

    /// `+1.0` for abuse, `-1.0` otherwise.
    pub fn sign(self) -> f64 {
        match self {
            Label::Abuse => 1.0,
            Label::NonAbuse => -1.0,
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Label::NonAbuse),
            1 => Ok(Label::Abuse),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Abuse => f.write_str("abuse"),
            Label::NonAbuse => f.write_str("non-abuse"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: u64,
    pub raw_text: String,
    pub text: String,
    pub label: Label,
    /// The label exactly as it appeared in the source file.
    pub raw_label: String,
    pub source: String,
}

impl Document {
    pub fn new(id: u64, text: impl Into<String>, label: Label, source: impl Into<String>) -> Self {
        let text = text.into();
        Document {
            id,
            raw_text: text.clone(),
            text,
            label,
            raw_label: (label as u8).to_string(),
            source: source.into(),
        }
    }
}

/// How raw source labels map onto the binary task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelScheme {
    /// Personal attack or not.
    Wiki,
    /// Four classes: abusive and hateful are positive, normal and spam negative.
    Tweets,
    /// Labels already given as 0/1.
    Binary,
}

impl LabelScheme {
    pub fn name(self) -> &'static str {
        match self {
            LabelScheme::Wiki => "wiki",
            LabelScheme::Tweets => "tweets",
            LabelScheme::Binary => "binary",
        }
    }

    /// Every raw label this scheme accepts (lowercase).
    pub fn known_labels(self) -> &'static [&'static str] {
        match self {
            LabelScheme::Wiki => &["attack", "normal", "none", "1", "0", "true", "false", "1.0", "0.0"],
            LabelScheme::Tweets => &["abusive", "hateful", "hate", "normal", "spam"],
            LabelScheme::Binary => &["1", "0", "true", "false"],
        }
    }
}

impl fmt::Display for LabelScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Maps a raw dataset label onto {0, 1}. Matching is case-insensitive and
/// ignores surrounding whitespace.
pub fn binarize_label(raw_label: &str, scheme: LabelScheme) -> Result<Label> {
    let norm = raw_label.trim().to_lowercase();
    let label = match (scheme, norm.as_str()) {
        (LabelScheme::Wiki, "attack" | "1" | "true" | "1.0") => Label::Abuse,
        (LabelScheme::Wiki, "normal" | "none" | "0" | "false" | "0.0") => Label::NonAbuse,
        (LabelScheme::Tweets, "abusive" | "hateful" | "hate") => Label::Abuse,
        (LabelScheme::Tweets, "normal" | "spam") => Label::NonAbuse,
        (LabelScheme::Binary, "1" | "true") => Label::Abuse,
        (LabelScheme::Binary, "0" | "false") => Label::NonAbuse,
        _ => {
            return Err(Error::UnknownLabel {
                scheme: scheme.to_string(),
                label: raw_label.to_string(),
            })
        }
    };
    Ok(label)
}

/// Column mapping for [`load_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub text_column: String,
    pub label_column: String,
    pub scheme: LabelScheme,
    /// Tag stored in [`Document::source`]; defaults to the scheme name.
    #[serde(default)]
    pub source: Option<String>,
    /// Field delimiter for delimited files; inferred from the extension
    /// (`.tsv` → tab, otherwise comma) when absent.
    #[serde(default)]
    pub delimiter: Option<char>,
}

impl Schema {
    pub fn new(text_column: &str, label_column: &str, scheme: LabelScheme) -> Self {
        Schema {
            text_column: text_column.to_string(),
            label_column: label_column.to_string(),
            scheme,
            source: None,
            delimiter: None,
        }
    }

    fn source_tag(&self) -> String {
        self.source
            .clone()
            .unwrap_or_else(|| self.scheme.name().to_string())
    }
}

/// Loads a delimited (`.csv`, `.tsv`) or JSON-lines (`.jsonl`, `.json`)
/// file. Ids are assigned sequentially in file order starting at 0. Texts
/// are stored uncleaned in both `raw_text` and `text`.
pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let docs = match ext.as_str() {
        "jsonl" | "json" | "ndjson" => load_jsonl(path, schema)?,
        _ => load_delimited(path, schema, &ext)?,
    };
    if docs.is_empty() {
        log::warn!("{} contains no documents", path.display());
    }
    Ok(docs)
}

fn make_doc(id: u64, text: String, raw_label: String, schema: &Schema, source: &str) -> Result<Document> {
    let label = binarize_label(&raw_label, schema.scheme)?;
    Ok(Document {
        id,
        raw_text: text.clone(),
        text,
        label,
        raw_label,
        source: source.to_string(),
    })
}

fn load_delimited(path: &Path, schema: &Schema, ext: &str) -> Result<Vec<Document>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let delimiter = schema
        .delimiter
        .unwrap_or(if ext == "tsv" { '\t' } else { ',' });
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .has_headers(true)
        .from_reader(file);
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        // an empty file has no header row
        Err(e) if is_empty_input(&e) => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MalformedRow {
                path: path.to_path_buf(),
                row: 0,
                message: format!("missing column {name:?}"),
            })
    };
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let text_col = column(&schema.text_column)?;
    let label_col = column(&schema.label_column)?;
    let source = schema.source_tag();

    let mut docs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let record = record.map_err(|e| Error::MalformedRow {
            path: path.to_path_buf(),
            row,
            message: e.to_string(),
        })?;
        let field = |col: usize| {
            record.get(col).map(str::to_string).ok_or_else(|| Error::MalformedRow {
                path: path.to_path_buf(),
                row,
                message: format!("missing field {col}"),
            })
        };
        let text = field(text_col)?;
        let raw_label = field(label_col)?;
        docs.push(make_doc(docs.len() as u64, text, raw_label, schema, &source)?);
    }
    Ok(docs)
}

fn is_empty_input(e: &csv::Error) -> bool {
    matches!(e.kind(), csv::ErrorKind::Io(_)) || e.to_string().contains("empty")
}

fn json_field_as_string(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn load_jsonl(path: &Path, schema: &Schema) -> Result<Vec<Document>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let source = schema.source_tag();
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::MalformedRow {
            path: path.to_path_buf(),
            row,
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let get = |name: &str| {
            value
                .get(name)
                .and_then(json_field_as_string)
                .ok_or_else(|| malformed(format!("missing or non-scalar field {name:?}")))
        };
        let text = get(&schema.text_column)?;
        let raw_label = get(&schema.label_column)?;
        docs.push(make_doc(docs.len() as u64, text, raw_label, schema, &source)?);
    }
    Ok(docs)
}

pub const USER_TOKEN: &str = "[USER]";
pub const URL_TOKEN: &str = "[URL]";
pub const EMOJI_TOKEN: &str = "[EMOJI]";

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b[a-z][a-z0-9+.\-]*://\S+|\bwww\.\S+").expect("url regex")
    })
}

fn mention_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\B@\w+").expect("mention regex"))
}

/// Unicode emoji blocks plus the joiners and modifiers that glue emoji
/// sequences together.
pub fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF
        | 0x2600..=0x27BF
        | 0x2B00..=0x2BFF
        | 0xFE0F
        | 0x200D
        | 0x20E3
    )
}

fn is_emoji_modifier(c: char) -> bool {
    matches!(c as u32, 0xFE0F | 0x200D | 0x20E3 | 0x1F3FB..=0x1F3FF)
}

/// Cleans a single text: URLs, @-mentions and emoji become special tokens,
/// then whitespace runs collapse to a single space and the ends are trimmed.
pub fn clean_text(text: &str) -> String {
    let text = url_re().replace_all(text, URL_TOKEN);
    let text = mention_re().replace_all(&text, USER_TOKEN);

    let mut out = String::with_capacity(text.len());
    let mut prev_emoji = false;
    for c in text.chars() {
        if is_emoji(c) {
            // a run of emoji glued by joiners/modifiers counts as one
            let continues = prev_emoji && is_emoji_modifier(c);
            if !continues {
                out.push(' ');
                out.push_str(EMOJI_TOKEN);
                out.push(' ');
            }
            prev_emoji = true;
        } else {
            out.push(c);
            prev_emoji = false;
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Cleans every document, drops texts that become empty and drops exact
/// duplicates of the cleaned text (first occurrence kept).
pub fn clean_corpus(docs: Vec<Document>) -> Vec<Document> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(docs.len());
    let mut empty = 0usize;
    for mut doc in docs {
        doc.text = clean_text(&doc.text);
        if doc.text.is_empty() {
            empty += 1;
            continue;
        }
        if seen.insert(doc.text.clone()) {
            out.push(doc);
        }
    }
    if empty > 0 {
        log::warn!("dropped {empty} documents that were empty after cleaning");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// An artificially rebalanced pool (`train`) and test set with equal abuse
/// prevalence.
#[derive(Debug, Clone, PartialEq)]
pub struct RebalancedDataset {
    pub name: String,
    /// The unlabeled pool, sorted by document id.
    pub train: Vec<Document>,
    /// Held-out evaluation set, sorted by document id.
    pub test: Vec<Document>,
    pub imbalance: f64,
    pub pool_size: usize,
    pub test_size: usize,
}

/// Number of abusive documents in a split of `size` at `imbalance`, rounded
/// down. The small epsilon absorbs representation error such as
/// `0.05 * 20000 = 1000.0000000000001` or `0.1 * 30 = 3.0000000000000004`.
pub fn abuse_count(imbalance: f64, size: usize) -> usize {
    (imbalance * size as f64 + 1e-9).floor() as usize
}

impl RebalancedDataset {
    pub fn abuse_fraction(docs: &[Document]) -> f64 {
        if docs.is_empty() {
            return 0.0;
        }
        docs.iter().filter(|d| d.label.is_abuse()).count() as f64 / docs.len() as f64
    }

    pub fn class_counts(docs: &[Document]) -> (usize, usize) {
        let pos = docs.iter().filter(|d| d.label.is_abuse()).count();
        (pos, docs.len() - pos)
    }

    /// Writes one JSON object per line: `{id, text, label, split}`.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            id: u64,
            text: &'a str,
            label: Label,
            split: Split,
        }
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let splits = [(Split::Train, &self.train), (Split::Test, &self.test)];
        for (split, docs) in splits {
            for d in docs.iter() {
                let row = Row {
                    id: d.id,
                    text: &d.text,
                    label: d.label,
                    split,
                };
                serde_json::to_writer(&mut w, &row)?;
                w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads a file written by [`RebalancedDataset::write_jsonl`]. The
    /// imbalance is recovered from the train split.
    pub fn read_jsonl(path: impl AsRef<Path>, name: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            id: u64,
            text: String,
            label: Label,
            split: Split,
        }
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
                path: path.to_path_buf(),
                row: i + 1,
                message: e.to_string(),
            })?;
            let mut doc = Document::new(row.id, row.text, row.label, name);
            doc.raw_label = (row.label as u8).to_string();
            match row.split {
                Split::Train => train.push(doc),
                Split::Test => test.push(doc),
            }
        }
        train.sort_by_key(|d| d.id);
        test.sort_by_key(|d| d.id);
        let imbalance = Self::abuse_fraction(&train);
        Ok(RebalancedDataset {
            name: name.to_string(),
            pool_size: train.len(),
            test_size: test.len(),
            train,
            test,
            imbalance,
        })
    }
}

fn check_imbalance(imbalance: f64) -> Result<()> {
    if !(imbalance > 0.0 && imbalance < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "imbalance must lie in (0, 1), got {imbalance}"
        )));
    }
    Ok(())
}

fn split_by_class(docs: &[Document]) -> (Vec<usize>, Vec<usize>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, d) in docs.iter().enumerate() {
        if d.label.is_abuse() {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    (pos, neg)
}

/// Largest pool size whose exact class proportions fit into the available
/// documents once `reserved_pos`/`reserved_neg` are set aside for testing.
pub fn max_feasible_pool(
    imbalance: f64,
    available_pos: usize,
    available_neg: usize,
    reserved_pos: usize,
    reserved_neg: usize,
) -> usize {
    let pos_budget = available_pos.saturating_sub(reserved_pos) as f64;
    let neg_budget = available_neg.saturating_sub(reserved_neg) as f64;
    let by_pos = (pos_budget / imbalance + 1e-9).floor();
    let by_neg = (neg_budget / (1.0 - imbalance) + 1e-9).floor();
    by_pos.min(by_neg) as usize
}

/// Builds a rebalanced pool and test set from a single source by sampling
/// uniformly without replacement inside each class.
pub fn rebalance(
    docs: &[Document],
    imbalance: f64,
    pool_size: usize,
    test_size: usize,
    rng_seed: u64,
) -> Result<RebalancedDataset> {
    check_imbalance(imbalance)?;
    let (mut pos, mut neg) = split_by_class(docs);
    let train_pos = abuse_count(imbalance, pool_size);
    let test_pos = abuse_count(imbalance, test_size);
    let train_neg = pool_size - train_pos;
    let test_neg = test_size - test_pos;

    let max_pool = || max_feasible_pool(imbalance, pos.len(), neg.len(), test_pos, test_neg);
    if pos.len() < train_pos + test_pos {
        return Err(Error::InsufficientClass {
            class: Label::Abuse,
            required: train_pos + test_pos,
            available: pos.len(),
            max_pool_size: max_pool(),
        });
    }
    if neg.len() < train_neg + test_neg {
        return Err(Error::InsufficientClass {
            class: Label::NonAbuse,
            required: train_neg + test_neg,
            available: neg.len(),
            max_pool_size: max_pool(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let pick = |idx: &[usize]| idx.iter().map(|&i| docs[i].clone()).collect::<Vec<_>>();
    let mut train = pick(&pos[..train_pos]);
    train.extend(pick(&neg[..train_neg]));
    let mut test = pick(&pos[train_pos..train_pos + test_pos]);
    test.extend(pick(&neg[train_neg..train_neg + test_neg]));
    train.sort_by_key(|d| d.id);
    test.sort_by_key(|d| d.id);

    Ok(RebalancedDataset {
        name: docs.first().map(|d| d.source.clone()).unwrap_or_default(),
        train,
        test,
        imbalance,
        pool_size,
        test_size,
    })
}

/// Like [`rebalance`], but the test split is drawn from a separate source
/// (for datasets that ship a predefined test set). Document ids of the two
/// sources must not collide; test ids are offset past the largest train id
/// when they do.
pub fn rebalance_with_test_source(
    train_source: &[Document],
    test_source: &[Document],
    imbalance: f64,
    pool_size: usize,
    test_size: usize,
    rng_seed: u64,
) -> Result<RebalancedDataset> {
    check_imbalance(imbalance)?;
    let (mut pos, mut neg) = split_by_class(train_source);
    let (mut tpos, mut tneg) = split_by_class(test_source);
    let train_pos = abuse_count(imbalance, pool_size);
    let train_neg = pool_size - train_pos;
    let test_pos = abuse_count(imbalance, test_size);
    let test_neg = test_size - test_pos;

    let max_pool = || max_feasible_pool(imbalance, pos.len(), neg.len(), 0, 0);
    for (class, required, available) in [
        (Label::Abuse, train_pos, pos.len()),
        (Label::NonAbuse, train_neg, neg.len()),
    ] {
        if available < required {
            return Err(Error::InsufficientClass {
                class,
                required,
                available,
                max_pool_size: max_pool(),
            });
        }
    }
    for (class, required, available) in [
        (Label::Abuse, test_pos, tpos.len()),
        (Label::NonAbuse, test_neg, tneg.len()),
    ] {
        if available < required {
            return Err(Error::InsufficientClass {
                class,
                required,
                available,
                max_pool_size: max_pool(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    tpos.shuffle(&mut rng);
    tneg.shuffle(&mut rng);

    let mut train: Vec<Document> = pos[..train_pos]
        .iter()
        .chain(&neg[..train_neg])
        .map(|&i| train_source[i].clone())
        .collect();
    let mut test: Vec<Document> = tpos[..test_pos]
        .iter()
        .chain(&tneg[..test_neg])
        .map(|&i| test_source[i].clone())
        .collect();

    let train_ids: HashSet<u64> = train.iter().map(|d| d.id).collect();
    if test.iter().any(|d| train_ids.contains(&d.id)) {
        let offset = train_source.iter().map(|d| d.id).max().map_or(0, |m| m + 1);
        for d in &mut test {
            d.id += offset;
        }
    }
    train.sort_by_key(|d| d.id);
    test.sort_by_key(|d| d.id);

    Ok(RebalancedDataset {
        name: train_source.first().map(|d| d.source.clone()).unwrap_or_default(),
        train,
        test,
        imbalance,
        pool_size,
        test_size,
    })
}

/// Counts documents per binarized label; handy for reporting source stats.
pub fn label_histogram(docs: &[Document]) -> HashMap<Label, usize> {
    let mut h = HashMap::new();
    for d in docs {
        *h.entry(d.label).or_insert(0) += 1;
    }
    h
}
