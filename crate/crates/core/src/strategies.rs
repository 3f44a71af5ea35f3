//! Cold-start seed acquisition and batch query strategies.
//!
//! Every strategy returns distinct, currently unlabeled pool positions and
//! breaks ties by ascending document id, so selections never depend on
//! evaluation order.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::engine::PoolState;
use crate::error::{Error, Result};
use crate::features::{squared_distance, weak_label, DenseVector, KeywordList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStrategy {
    Random,
    LeastConfidence,
    GreedyCoreset,
    EmbeddingKmeans,
}

impl QueryStrategy {
    pub const ALL: [QueryStrategy; 4] = [
        QueryStrategy::Random,
        QueryStrategy::LeastConfidence,
        QueryStrategy::GreedyCoreset,
        QueryStrategy::EmbeddingKmeans,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QueryStrategy::Random => "random",
            QueryStrategy::LeastConfidence => "least_confidence",
            QueryStrategy::GreedyCoreset => "greedy_coreset",
            QueryStrategy::EmbeddingKmeans => "embedding_kmeans",
        }
    }

    pub fn needs_embeddings(self) -> bool {
        matches!(self, QueryStrategy::GreedyCoreset | QueryStrategy::EmbeddingKmeans)
    }
}

impl fmt::Display for QueryStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QueryStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QueryStrategy::ALL
            .into_iter()
            .find(|q| q.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown query strategy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColdStrategy {
    Random,
    Heuristic,
}

impl ColdStrategy {
    pub fn name(self) -> &'static str {
        match self {
            ColdStrategy::Random => "random",
            ColdStrategy::Heuristic => "heuristic",
        }
    }
}

impl fmt::Display for ColdStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ColdStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(ColdStrategy::Random),
            "heuristic" => Ok(ColdStrategy::Heuristic),
            other => Err(Error::InvalidConfig(format!("unknown cold strategy {other:?}"))),
        }
    }
}

/// Which points count as centers while a core-set batch is being built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoresetDistance {
    /// Standard batch k-center: labeled points plus the picks made so far.
    #[default]
    LabeledAndSelected,
    /// Distances to the labeled set only; the batch is the top scorers.
    LabeledOnly,
}

/// Uniform sample of `size` unlabeled positions without replacement.
fn sample_unlabeled(pool: &PoolState, size: usize, rng_seed: u64) -> Result<Vec<usize>> {
    if size == 0 {
        return Err(Error::InvalidArgument("selection size must be at least 1".into()));
    }
    let candidates: Vec<usize> = pool.unlabeled().collect();
    if size > candidates.len() {
        return Err(Error::BatchTooLarge {
            requested: size,
            available: candidates.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(index::sample(&mut rng, candidates.len(), size)
        .into_iter()
        .map(|i| candidates[i])
        .collect())
}

pub fn seed_random(pool: &PoolState, seed_size: usize, rng_seed: u64) -> Result<Vec<usize>> {
    sample_unlabeled(pool, seed_size, rng_seed)
}

pub fn query_random(pool: &PoolState, batch_size: usize, rng_seed: u64) -> Result<Vec<usize>> {
    sample_unlabeled(pool, batch_size, rng_seed)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeuristicSeed {
    pub indices: Vec<usize>,
    /// How many of `indices` came from the weakly-positive stratum.
    pub from_positive: usize,
    pub from_negative: usize,
    /// Set when one stratum was too small and the other filled the gap.
    pub fell_back: bool,
}

/// Keyword-heuristic cold start: half the seed from documents whose keyword
/// density exceeds `threshold`, half from the rest. An odd extra item goes
/// to the negative stratum. If a stratum is short, the other one fills in.
pub fn seed_heuristic<S: AsRef<str>>(
    pool: &PoolState,
    texts: &[S],
    seed_size: usize,
    keywords: &KeywordList,
    threshold: f64,
    rng_seed: u64,
) -> Result<HeuristicSeed> {
    if seed_size == 0 {
        return Err(Error::InvalidArgument("seed size must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} outside [0, 1]")));
    }
    if texts.len() != pool.len() {
        return Err(Error::DimensionMismatch {
            expected: pool.len(),
            actual: texts.len(),
        });
    }
    let (mut weak_pos, mut weak_neg) = (Vec::new(), Vec::new());
    for pos in pool.unlabeled() {
        match weak_label(texts[pos].as_ref(), keywords, threshold) {
            Label::Abuse => weak_pos.push(pos),
            Label::NonAbuse => weak_neg.push(pos),
        }
    }
    let available = weak_pos.len() + weak_neg.len();
    if seed_size > available {
        return Err(Error::BatchTooLarge {
            requested: seed_size,
            available,
        });
    }

    let mut want_pos = seed_size / 2;
    let mut want_neg = seed_size - want_pos;
    let mut fell_back = false;
    if want_pos > weak_pos.len() {
        log::warn!(
            "only {} weakly-positive documents for {} requested; filling from negatives",
            weak_pos.len(),
            want_pos
        );
        want_neg += want_pos - weak_pos.len();
        want_pos = weak_pos.len();
        fell_back = true;
    }
    if want_neg > weak_neg.len() {
        log::warn!(
            "only {} weakly-negative documents for {} requested; filling from positives",
            weak_neg.len(),
            want_neg
        );
        want_pos += want_neg - weak_neg.len();
        want_neg = weak_neg.len();
        fell_back = true;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut indices: Vec<usize> = index::sample(&mut rng, weak_pos.len(), want_pos)
        .into_iter()
        .map(|i| weak_pos[i])
        .collect();
    indices.extend(
        index::sample(&mut rng, weak_neg.len(), want_neg)
            .into_iter()
            .map(|i| weak_neg[i]),
    );
    Ok(HeuristicSeed {
        indices,
        from_positive: want_pos,
        from_negative: want_neg,
        fell_back,
    })
}

/// `1 - max_c p(c|x)`; lies in `[0, 0.5]` for two classes.
pub fn least_confidence_score(p: [f64; 2]) -> f64 {
    1.0 - p[0].max(p[1])
}

fn check_batch(pool: &PoolState, batch_size: usize) -> Result<()> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    if batch_size > pool.n_unlabeled() {
        return Err(Error::BatchTooLarge {
            requested: batch_size,
            available: pool.n_unlabeled(),
        });
    }
    Ok(())
}

/// Picks the `batch_size` candidates with the highest least-confidence score.
/// `scored` pairs unlabeled pool positions with their class probabilities.
pub fn query_least_confidence(
    pool: &PoolState,
    batch_size: usize,
    scored: &[(usize, [f64; 2])],
) -> Result<Vec<usize>> {
    check_batch(pool, batch_size)?;
    for &(pos, _) in scored {
        if pos >= pool.len() {
            return Err(Error::UnknownIndex(pos));
        }
        if pool.is_labeled(pos) {
            return Err(Error::AlreadyLabeled(pos));
        }
    }
    if scored.len() < batch_size {
        return Err(Error::BatchTooLarge {
            requested: batch_size,
            available: scored.len(),
        });
    }
    let mut ranked: Vec<(f64, u64, usize)> = scored
        .iter()
        .map(|&(pos, p)| (least_confidence_score(p), pool.id(pos), pos))
        .collect();
    let by_score = |a: &(f64, u64, usize), b: &(f64, u64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if batch_size < ranked.len() {
        ranked.select_nth_unstable_by(batch_size - 1, by_score);
        ranked.truncate(batch_size);
    }
    ranked.sort_by(by_score);
    Ok(ranked.into_iter().map(|r| r.2).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoresetSelection {
    pub indices: Vec<usize>,
    /// Minimum distance to the covered set at the time each item was picked.
    pub pick_distances: Vec<f64>,
}

/// Incrementally maintained nearest-center distances for k-center greedy.
///
/// The engine keeps one of these across iterations so that each query only
/// pays for the centers added since the previous one.
#[derive(Debug, Clone)]
pub struct KCenterState {
    min_sq: Vec<f64>,
    centers: Vec<bool>,
}

impl KCenterState {
    pub fn new(n: usize) -> Self {
        KCenterState {
            min_sq: vec![f64::INFINITY; n],
            centers: vec![false; n],
        }
    }

    /// Registers every labeled position of `pool` not yet known as a center.
    pub fn sync(&mut self, pool: &PoolState, embeddings: &[DenseVector]) {
        let new: Vec<usize> = pool.labeled_positions().filter(|&p| !self.centers[p]).collect();
        self.add_centers(&new, embeddings);
    }

    fn add_centers(&mut self, new: &[usize], embeddings: &[DenseVector]) {
        if new.is_empty() {
            return;
        }
        for &c in new {
            self.centers[c] = true;
        }
        self.min_sq.par_iter_mut().enumerate().for_each(|(i, d)| {
            for &c in new {
                let s = squared_distance(&embeddings[i], &embeddings[c]);
                if s < *d {
                    *d = s;
                }
            }
        });
    }

    pub fn select(
        &self,
        pool: &PoolState,
        batch_size: usize,
        embeddings: &[DenseVector],
        mode: CoresetDistance,
    ) -> Result<CoresetSelection> {
        check_batch(pool, batch_size)?;
        if pool.n_labeled() == 0 {
            return Err(Error::EmptyLabeledSet);
        }
        if embeddings.len() != pool.len() {
            return Err(Error::DimensionMismatch {
                expected: pool.len(),
                actual: embeddings.len(),
            });
        }
        let mut cand: Vec<(usize, f64)> = pool.unlabeled().map(|p| (p, self.min_sq[p])).collect();
        let better = |a: &(usize, f64), b: &(usize, f64), pool: &PoolState| {
            a.1.total_cmp(&b.1).then(pool.id(b.0).cmp(&pool.id(a.0)))
        };
        let mut picks = Vec::with_capacity(batch_size);
        let mut dists = Vec::with_capacity(batch_size);
        match mode {
            CoresetDistance::LabeledOnly => {
                cand.sort_by(|a, b| better(b, a, pool));
                for &(p, d) in cand.iter().take(batch_size) {
                    picks.push(p);
                    dists.push(d.sqrt());
                }
            }
            CoresetDistance::LabeledAndSelected => {
                for _ in 0..batch_size {
                    let (best_i, &(p, d)) = cand
                        .iter()
                        .enumerate()
                        .max_by(|x, y| better(x.1, y.1, pool))
                        .expect("candidates remain");
                    picks.push(p);
                    dists.push(d.sqrt());
                    cand.swap_remove(best_i);
                    let center = &embeddings[p];
                    cand.par_iter_mut().for_each(|(q, dq)| {
                        let s = squared_distance(&embeddings[*q], center);
                        if s < *dq {
                            *dq = s;
                        }
                    });
                }
            }
        }
        Ok(CoresetSelection {
            indices: picks,
            pick_distances: dists,
        })
    }
}

/// k-center greedy over Euclidean distances between pool embeddings.
pub fn query_greedy_coreset(
    pool: &PoolState,
    batch_size: usize,
    embeddings: &[DenseVector],
    mode: CoresetDistance,
) -> Result<CoresetSelection> {
    if embeddings.len() != pool.len() {
        return Err(Error::DimensionMismatch {
            expected: pool.len(),
            actual: embeddings.len(),
        });
    }
    let mut state = KCenterState::new(pool.len());
    state.sync(pool, embeddings);
    state.select(pool, batch_size, embeddings, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansOptions {
    pub max_iter: usize,
    /// Stop once no centroid moves further than this.
    pub tolerance: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            max_iter: 100,
            tolerance: 1e-6,
        }
    }
}

fn nearest_centroid(x: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, cen) in centroids.iter().enumerate() {
        let d = squared_distance(x, cen);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Seeded k-means++ start. Also returns the squared distance from every
/// point to every chosen centroid, indexed `[centroid][point]`.
fn kmeans_plus_plus(points: &[&DenseVector], k: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].0.clone()];
    let mut table: Vec<Vec<f64>> = vec![points.par_iter().map(|p| squared_distance(p, &centroids[0])).collect()];
    let mut d2 = table[0].clone();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if r < w {
                    pick = Some(i);
                    break;
                }
                r -= w;
            }
            // rounding can leave r just above the last weight
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("positive weight"))
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen[next] = true;
        let c = points[next].0.clone();
        let row: Vec<f64> = points.par_iter().map(|p| squared_distance(p, &c)).collect();
        for (m, &d) in d2.iter_mut().zip(&row) {
            if d < *m {
                *m = d;
            }
        }
        table.push(row);
        centroids.push(c);
    }
    (centroids, table)
}

/// Mean of the points assigned to each centroid; empty clusters keep their
/// centroid. With `previous` set, only clusters whose membership changed are
/// recomputed. Returns each centroid's shift.
fn update_centroids(
    points: &[&DenseVector],
    assign: &[usize],
    previous: Option<&[usize]>,
    centroids: &mut [Vec<f64>],
) -> Vec<f64> {
    let k = centroids.len();
    let dim = centroids[0].len();
    let mut changed = vec![previous.is_none(); k];
    if let Some(prev) = previous {
        for (&a, &b) in assign.iter().zip(prev) {
            if a != b {
                changed[a] = true;
                changed[b] = true;
            }
        }
    }
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assign) {
        if !changed[c] {
            continue;
        }
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(p.iter()) {
            *s += x;
        }
    }
    let mut shifts = vec![0.0; k];
    for c in 0..k {
        if counts[c] == 0 {
            continue;
        }
        let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        shifts[c] = squared_distance(&new, &centroids[c]).sqrt();
        centroids[c] = new;
    }
    shifts
}

/// Plain Lloyd iterations from the same seeded k-means++ start as
/// [`kmeans`]. Produces the same centroids, only slower.
pub fn kmeans_reference(
    points: &[&DenseVector],
    k: usize,
    rng_seed: u64,
    options: KMeansOptions,
) -> (Vec<Vec<f64>>, usize) {
    assert!(k >= 1 && k <= points.len());
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (mut centroids, _) = kmeans_plus_plus(points, k, &mut rng);
    let mut iters = 0;
    for _ in 0..options.max_iter {
        iters += 1;
        let assign: Vec<usize> = points.iter().map(|p| nearest_centroid(p, &centroids)).collect();
        let shifts = update_centroids(points, &assign, None, &mut centroids);
        if shifts.iter().copied().fold(0.0, f64::max) < options.tolerance {
            break;
        }
    }
    (centroids, iters)
}

/// Relative slack on bound comparisons, so a centroid is only skipped when
/// it is farther than the current one by more than rounding error.
const BOUND_SLACK: f64 = 1e-9;

/// Per-point state for bounded assignment.
struct Bounds {
    assign: usize,
    /// Squared distance to the assigned centroid; exact when `fresh`.
    upper_sq: f64,
    upper: f64,
    fresh: bool,
}

/// Lloyd's k-means with seeded k-means++ initialization over the unlabeled
/// embeddings. Returns the final centroids and the number of iterations.
///
/// Assignments use triangle-inequality bounds to skip distance
/// computations (Elkan's method); ties go to the lowest centroid index, as
/// in a plain nearest-centroid scan.
pub fn kmeans(
    points: &[&DenseVector],
    k: usize,
    rng_seed: u64,
    options: KMeansOptions,
) -> (Vec<Vec<f64>>, usize) {
    assert!(k >= 1 && k <= points.len());
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (mut centroids, table) = kmeans_plus_plus(points, k, &mut rng);
    // lower[i * k + c] bounds the distance from point i to centroid c
    let mut lower = vec![0.0; points.len() * k];
    let mut bounds: Vec<Bounds> = lower
        .par_chunks_mut(k)
        .enumerate()
        .map(|(i, low)| {
            let mut best = 0;
            for c in 0..k {
                let d = table[c][i];
                low[c] = d.sqrt();
                if d < table[best][i] {
                    best = c;
                }
            }
            let upper_sq = table[best][i];
            Bounds {
                assign: best,
                upper_sq,
                upper: upper_sq.sqrt(),
                fresh: true,
            }
        })
        .collect();
    drop(table);

    let mut iters = 0;
    let mut previous: Option<Vec<usize>> = None;
    loop {
        iters += 1;
        let assign: Vec<usize> = bounds.iter().map(|b| b.assign).collect();
        let shifts = update_centroids(points, &assign, previous.as_deref(), &mut centroids);
        previous = Some(assign);
        if iters >= options.max_iter || shifts.iter().copied().fold(0.0, f64::max) < options.tolerance {
            break;
        }
        bounds.par_iter_mut().zip(lower.par_chunks_mut(k)).for_each(|(b, low)| {
            for (l, s) in low.iter_mut().zip(&shifts) {
                *l = (*l - s).max(0.0);
            }
            b.upper += shifts[b.assign];
            b.fresh = b.fresh && shifts[b.assign] == 0.0;
        });

        let mut half_gap = vec![0.0; k * k];
        let mut nearest_other = vec![f64::INFINITY; k];
        for a in 0..k {
            for c in (a + 1)..k {
                let d = 0.5 * squared_distance(&centroids[a], &centroids[c]).sqrt();
                half_gap[a * k + c] = d;
                half_gap[c * k + a] = d;
                nearest_other[a] = nearest_other[a].min(d);
                nearest_other[c] = nearest_other[c].min(d);
            }
        }

        bounds
            .par_iter_mut()
            .zip(lower.par_chunks_mut(k))
            .zip(points.par_iter())
            .for_each(|((b, low), p)| {
                let clears = |bound: f64, upper: f64| bound > upper * (1.0 + BOUND_SLACK);
                if clears(nearest_other[b.assign], b.upper) {
                    return;
                }
                for c in 0..k {
                    if c == b.assign || clears(low[c], b.upper) || clears(half_gap[b.assign * k + c], b.upper) {
                        continue;
                    }
                    if !b.fresh {
                        b.upper_sq = squared_distance(p, &centroids[b.assign]);
                        b.upper = b.upper_sq.sqrt();
                        low[b.assign] = b.upper;
                        b.fresh = true;
                        if clears(low[c], b.upper) || clears(half_gap[b.assign * k + c], b.upper) {
                            continue;
                        }
                    }
                    let d_sq = squared_distance(p, &centroids[c]);
                    let d = d_sq.sqrt();
                    low[c] = d;
                    if d_sq < b.upper_sq || (d_sq == b.upper_sq && c < b.assign) {
                        b.assign = c;
                        b.upper_sq = d_sq;
                        b.upper = d;
                    }
                }
            });
    }
    (centroids, iters)
}

/// Clusters the unlabeled embeddings into `batch_size` groups and takes the
/// unlabeled item nearest each centroid; a centroid whose nearest item is
/// already claimed takes its next-nearest unclaimed item.
pub fn query_embedding_kmeans(
    pool: &PoolState,
    batch_size: usize,
    embeddings: &[DenseVector],
    rng_seed: u64,
    options: KMeansOptions,
) -> Result<Vec<usize>> {
    check_batch(pool, batch_size)?;
    if embeddings.len() != pool.len() {
        return Err(Error::DimensionMismatch {
            expected: pool.len(),
            actual: embeddings.len(),
        });
    }
    let positions: Vec<usize> = pool.unlabeled().collect();
    let points: Vec<&DenseVector> = positions.iter().map(|&p| &embeddings[p]).collect();
    let (centroids, _) = kmeans(&points, batch_size, rng_seed, options);

    let mut claimed = vec![false; positions.len()];
    let mut picks = Vec::with_capacity(batch_size);
    for cen in &centroids {
        let mut best: Option<(f64, u64, usize)> = None;
        for (i, p) in points.iter().enumerate() {
            if claimed[i] {
                continue;
            }
            let key = (squared_distance(p, cen), pool.id(positions[i]), i);
            let better = match &best {
                None => true,
                Some(b) => match key.0.total_cmp(&b.0) {
                    Ordering::Less => true,
                    Ordering::Equal => key.1 < b.1,
                    Ordering::Greater => false,
                },
            };
            if better {
                best = Some(key);
            }
        }
        let (_, _, i) = best.expect("k never exceeds the number of candidates");
        claimed[i] = true;
        picks.push(positions[i]);
    }
    Ok(picks)
}
