//! Classification metrics, the N_90 efficiency metric, the F1_AL
//! effectiveness metric, labeled-pool imbalance tracking and aggregation of
//! repeated runs.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::engine::LearningCurve;
use crate::error::{Error, Result};

/// Confusion counts with abuse as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn new(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    pub fn from_predictions(gold: &[Label], predicted: &[Label]) -> Self {
        assert_eq!(gold.len(), predicted.len());
        let mut c = ConfusionCounts::default();
        for (&g, &p) in gold.iter().zip(predicted) {
            match (g, p) {
                (Label::Abuse, Label::Abuse) => c.tp += 1,
                (Label::NonAbuse, Label::Abuse) => c.fp += 1,
                (Label::NonAbuse, Label::NonAbuse) => c.tn += 1,
                (Label::Abuse, Label::NonAbuse) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// The same predictions with the class names exchanged.
    pub fn swapped(&self) -> Self {
        ConfusionCounts {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }
}

fn class_f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        // no predicted and no actual members of this class
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Unweighted mean of the per-class F1 scores.
pub fn macro_f1(counts: &ConfusionCounts) -> Result<f64> {
    if counts.total() == 0 {
        return Err(Error::InvalidArgument("macro-F1 of empty confusion counts".into()));
    }
    let pos = class_f1(counts.tp, counts.fp, counts.fn_);
    let neg = class_f1(counts.tn, counts.fn_, counts.fp);
    Ok((pos + neg) / 2.0)
}

/// `(fp / (fp + tn), fn / (fn + tp))`; `None` where a denominator is zero.
pub fn fpr_fnr(counts: &ConfusionCounts) -> (Option<f64>, Option<f64>) {
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    (
        ratio(counts.fp, counts.fp + counts.tn),
        ratio(counts.fn_, counts.fn_ + counts.tp),
    )
}

/// Labeled-set size needed to reach 90% of a reference F1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum N90 {
    Reached(usize),
    NotReached,
}

impl N90 {
    pub fn value(self) -> Option<usize> {
        match self {
            N90::Reached(n) => Some(n),
            N90::NotReached => None,
        }
    }
}

impl fmt::Display for N90 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            N90::Reached(n) => write!(f, "{n}"),
            N90::NotReached => f.write_str("not reached"),
        }
    }
}

impl Serialize for N90 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            N90::Reached(n) => s.serialize_u64(*n as u64),
            N90::NotReached => s.serialize_str("not reached"),
        }
    }
}

impl<'de> Deserialize<'de> for N90 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(N90::Reached(n as usize)),
            Raw::S(s) if s == "not reached" => Ok(N90::NotReached),
            Raw::S(s) => Err(serde::de::Error::custom(format!("invalid N90 {s:?}"))),
        }
    }
}

/// Fraction of the reference F1 that defines N_90.
pub const N90_FRACTION: f64 = 0.9;

/// N_90 over `(labeled_count, f1)` points in curve order. Inclusive by
/// default (`f1 >= 0.9 * f1_ref`); `strict` requires `>`.
pub fn n90_from_points(points: &[(usize, f64)], f1_ref: f64, strict: bool) -> Result<N90> {
    if points.is_empty() {
        return Err(Error::EmptyCurve);
    }
    let threshold = N90_FRACTION * f1_ref;
    let hit = points
        .iter()
        .find(|&&(_, f1)| if strict { f1 > threshold } else { f1 >= threshold });
    Ok(hit.map_or(N90::NotReached, |&(n, _)| N90::Reached(n)))
}

pub fn compute_n90(curve: &LearningCurve, f1_ref: f64) -> Result<N90> {
    n90_from_points(&curve.f1_points(), f1_ref, false)
}

pub fn compute_n90_strict(curve: &LearningCurve, f1_ref: f64) -> Result<N90> {
    n90_from_points(&curve.f1_points(), f1_ref, true)
}

pub fn f1_al_from_points(points: &[(usize, f64)]) -> Result<f64> {
    points
        .iter()
        .map(|p| p.1)
        .max_by(f64::total_cmp)
        .ok_or(Error::EmptyCurve)
}

/// Maximum macro-F1 anywhere on the curve.
pub fn compute_f1_al(curve: &LearningCurve) -> Result<f64> {
    f1_al_from_points(&curve.f1_points())
}

/// Abuse fraction of the labeled pool at each curve point.
pub fn labeled_imbalance_curve(curve: &LearningCurve) -> Vec<f64> {
    curve.points.iter().map(|p| p.labeled_abuse_fraction()).collect()
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if let Some(&first) = xs.first() {
        if xs.iter().all(|&x| x == first) {
            return (first, 0.0);
        }
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanPoint {
    pub labeled_count: usize,
    pub mean_f1: f64,
    pub std_f1: f64,
    pub mean_labeled_abuse_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub failed: bool,
    pub f1_al: Option<f64>,
    pub n90: Option<N90>,
    pub final_f1: Option<f64>,
    pub final_labeled_abuse_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Passive full-pool F1 of this experiment's classifier.
    pub f1_20k: Option<f64>,
    /// Reference for N_90: best passive F1 across classifiers.
    pub f1_ref: Option<f64>,
    /// Maximum of the mean curve.
    pub f1_al: Option<f64>,
    /// N_90 of the mean curve.
    pub n90: Option<N90>,
    pub mean_curve: Vec<MeanPoint>,
    pub n_runs: usize,
    pub n_failed: usize,
    /// Mean per-seed F1_AL over successful seeds only.
    pub f1_al_successful_mean: Option<f64>,
    /// Mean per-seed F1_AL counting failed seeds as 0.
    pub f1_al_all_mean: Option<f64>,
    pub seeds: Vec<SeedResult>,
}

impl RunSummary {
    pub fn failure_note(&self) -> String {
        format!("{}/{} failed", self.n_failed, self.n_runs)
    }
}

/// Pointwise mean and population standard deviation of F1 across runs.
/// Failed runs are counted but excluded from the means. Successful runs must
/// share the same labeled counts.
pub fn aggregate_runs(runs: &[LearningCurve], f1_20k: Option<f64>, f1_ref: Option<f64>) -> Result<RunSummary> {
    if runs.is_empty() {
        return Err(Error::MisalignedCurves("no runs to aggregate".into()));
    }
    // seed order must not matter
    let mut runs: Vec<&LearningCurve> = runs.iter().collect();
    runs.sort_by_key(|r| r.meta.seed);

    let ok: Vec<&LearningCurve> = runs.iter().copied().filter(|r| !r.failed).collect();
    if let Some(first) = ok.first() {
        let counts: Vec<usize> = first.points.iter().map(|p| p.labeled_count).collect();
        for r in &ok[1..] {
            let other: Vec<usize> = r.points.iter().map(|p| p.labeled_count).collect();
            if other != counts {
                return Err(Error::MisalignedCurves(format!(
                    "seed {} has labeled counts {:?}, seed {} has {:?}",
                    first.meta.seed, counts, r.meta.seed, other
                )));
            }
        }
    }

    let n_points = ok.first().map_or(0, |r| r.points.len());
    let mean_curve: Vec<MeanPoint> = (0..n_points)
        .map(|i| {
            let f1s: Vec<f64> = ok.iter().map(|r| r.points[i].macro_f1).collect();
            let fracs: Vec<f64> = ok.iter().map(|r| r.points[i].labeled_abuse_fraction()).collect();
            let (mean, std) = mean_std(&f1s);
            MeanPoint {
                labeled_count: ok[0].points[i].labeled_count,
                mean_f1: mean,
                std_f1: std,
                mean_labeled_abuse_fraction: mean_std(&fracs).0,
            }
        })
        .collect();

    let mean_points: Vec<(usize, f64)> = mean_curve.iter().map(|m| (m.labeled_count, m.mean_f1)).collect();
    let f1_al = f1_al_from_points(&mean_points).ok();
    let n90 = match f1_ref {
        Some(r) if !mean_points.is_empty() => Some(n90_from_points(&mean_points, r, false)?),
        _ => None,
    };

    let seeds: Vec<SeedResult> = runs
        .iter()
        .map(|r| {
            let pts = r.f1_points();
            SeedResult {
                seed: r.meta.seed,
                failed: r.failed,
                f1_al: f1_al_from_points(&pts).ok(),
                n90: f1_ref.and_then(|f| n90_from_points(&pts, f, false).ok()),
                final_f1: r.points.last().map(|p| p.macro_f1),
                final_labeled_abuse_fraction: r.points.last().map(|p| p.labeled_abuse_fraction()),
            }
        })
        .collect();
    let successful: Vec<f64> = seeds.iter().filter_map(|s| s.f1_al).collect();
    let f1_al_successful_mean = (!successful.is_empty()).then(|| mean_std(&successful).0);
    let f1_al_all_mean = Some(successful.iter().sum::<f64>() / runs.len() as f64);

    Ok(RunSummary {
        f1_20k,
        f1_ref,
        f1_al,
        n90,
        mean_curve,
        n_runs: runs.len(),
        n_failed: runs.len() - ok.len(),
        f1_al_successful_mean,
        f1_al_all_mean,
        seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{CurvePoint, RunMeta};
    use approx::assert_abs_diff_eq;

    fn curve(seed: u64, pts: &[(usize, f64)]) -> LearningCurve {
        LearningCurve {
            meta: RunMeta {
                seed,
                ..RunMeta::default()
            },
            points: pts
                .iter()
                .enumerate()
                .map(|(i, &(n, f1))| CurvePoint {
                    iteration: i,
                    labeled_count: n,
                    macro_f1: f1,
                    ..CurvePoint::default()
                })
                .collect(),
            failed: false,
            failure: None,
        }
    }

    #[test]
    fn perfect_predictions() {
        let c = ConfusionCounts::new(10, 0, 90, 0);
        assert_eq!(macro_f1(&c).unwrap(), 1.0);
        assert_eq!(fpr_fnr(&c), (Some(0.0), Some(0.0)));
    }

    #[test]
    fn hand_computed_macro_f1() {
        let c = ConfusionCounts::new(40, 20, 30, 10);
        let pos = 80.0 / 110.0;
        let neg = 60.0 / 90.0;
        assert_abs_diff_eq!(macro_f1(&c).unwrap(), (pos + neg) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(macro_f1(&c).unwrap(), 0.6970, epsilon = 1e-4);
        assert_eq!(macro_f1(&c).unwrap(), macro_f1(&c.swapped()).unwrap());
    }

    #[test]
    fn all_positive_predictor() {
        let c = ConfusionCounts::new(10, 90, 0, 0);
        assert_eq!(fpr_fnr(&c), (Some(1.0), Some(0.0)));
        // negative class never predicted nor correct: F1_neg = 0
        assert_abs_diff_eq!(macro_f1(&c).unwrap(), (20.0 / 110.0) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn undefined_rates() {
        assert_eq!(fpr_fnr(&ConfusionCounts::new(5, 0, 0, 5)).0, None);
        assert!(macro_f1(&ConfusionCounts::default()).is_err());
    }

    #[test]
    fn n90_first_crossing() {
        let c = curve(1, &[(20, 0.70), (70, 0.80), (120, 0.83), (170, 0.85)]);
        assert_eq!(compute_n90(&c, 0.92).unwrap(), N90::Reached(120));
        let low = curve(1, &[(20, 0.3), (70, 0.5)]);
        assert_eq!(compute_n90(&low, 0.92).unwrap(), N90::NotReached);
        assert!(compute_n90(&curve(1, &[]), 0.9).is_err());
    }

    #[test]
    fn n90_inclusive_vs_strict() {
        let c = curve(1, &[(20, 0.45), (70, 0.9)]);
        assert_eq!(compute_n90(&c, 0.5).unwrap(), N90::Reached(20));
        assert_eq!(compute_n90_strict(&c, 0.5).unwrap(), N90::Reached(70));
    }

    #[test]
    fn f1_al_is_max() {
        assert_eq!(compute_f1_al(&curve(1, &[(20, 0.5), (70, 0.6), (120, 0.7)])).unwrap(), 0.7);
        assert_eq!(compute_f1_al(&curve(1, &[(20, 0.5), (70, 0.9), (120, 0.7)])).unwrap(), 0.9);
        assert!(compute_f1_al(&curve(1, &[])).is_err());
    }

    #[test]
    fn aggregate_hand_values() {
        let runs = vec![curve(1, &[(20, 0.8)]), curve(2, &[(20, 0.9)]), curve(3, &[(20, 1.0)])];
        let s = aggregate_runs(&runs, None, None).unwrap();
        assert_abs_diff_eq!(s.mean_curve[0].mean_f1, 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(s.mean_curve[0].std_f1, (0.02f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.mean_curve[0].std_f1, 0.0816, epsilon = 1e-4);
    }

    #[test]
    fn identical_runs_have_zero_std() {
        let runs = vec![curve(1, &[(20, 0.5), (70, 0.7)]); 3];
        let s = aggregate_runs(&runs, None, None).unwrap();
        assert!(s.mean_curve.iter().all(|m| m.std_f1 == 0.0));
    }

    #[test]
    fn failed_runs_are_excluded() {
        let mut failed = curve(3, &[]);
        failed.failed = true;
        let runs = vec![curve(1, &[(20, 0.6)]), curve(2, &[(20, 0.8)]), failed];
        let s = aggregate_runs(&runs, Some(0.9), Some(0.9)).unwrap();
        assert_eq!(s.failure_note(), "1/3 failed");
        assert_abs_diff_eq!(s.mean_curve[0].mean_f1, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(s.f1_al_successful_mean.unwrap(), 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(s.f1_al_all_mean.unwrap(), 1.4 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn misaligned_curves_error() {
        let runs = vec![curve(1, &[(20, 0.6)]), curve(2, &[(30, 0.8)])];
        assert!(matches!(aggregate_runs(&runs, None, None), Err(Error::MisalignedCurves(_))));
    }

    #[test]
    fn n90_serde() {
        assert_eq!(serde_json::to_string(&N90::Reached(170)).unwrap(), "170");
        assert_eq!(serde_json::to_string(&N90::NotReached).unwrap(), "\"not reached\"");
        let back: N90 = serde_json::from_str("\"not reached\"").unwrap();
        assert_eq!(back, N90::NotReached);
    }
}
