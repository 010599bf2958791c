//! Split-conformal prediction sets for binary classifiers, with standard and
//! Mondrian (per-category) calibration.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    Standard,
    Mondrian,
}

impl std::str::FromStr for CalibrationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" | "score" | "lac" => Ok(Self::Standard),
            "mondrian" => Ok(Self::Mondrian),
            _ => Err(Error::Param(format!("unknown calibration mode '{s}'"))),
        }
    }
}

/// Nonconformity scores `1 − p(true class)` grouped by category. Standard
/// calibration has a single category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub mode: CalibrationMode,
    pub scores: Vec<Vec<f64>>,
}

/// `(p₀, p₁)` pairs from class-1 scores.
pub fn two_class(scores: &[f64]) -> Vec<[f64; 2]> {
    scores.iter().map(|&s| [1.0 - s, s]).collect()
}

pub fn calibrate(probs: &[[f64; 2]], labels: &[u8], mode: CalibrationMode) -> Result<Calibration> {
    match mode {
        CalibrationMode::Standard => calibrate_by(probs, labels, &vec![0; labels.len()], 1, mode),
        CalibrationMode::Mondrian => {
            let cats: Vec<usize> = labels.iter().map(|&y| usize::from(y)).collect();
            calibrate_by(probs, labels, &cats, 2, mode)
        }
    }
}

/// Calibration with an explicit taxonomy: instance `i` belongs to
/// `categories[i] < n_categories`.
pub fn calibrate_by(
    probs: &[[f64; 2]],
    labels: &[u8],
    categories: &[usize],
    n_categories: usize,
    mode: CalibrationMode,
) -> Result<Calibration> {
    if probs.len() != labels.len() || categories.len() != labels.len() {
        return shape_err("calibration inputs differ in length");
    }
    if probs.is_empty() {
        return Err(Error::Param("empty calibration set".into()));
    }
    let mut scores = vec![Vec::new(); n_categories];
    for ((p, &y), &c) in probs.iter().zip(labels).zip(categories) {
        let s = 1.0 - p[usize::from(y)];
        if !s.is_finite() {
            return Err(Error::NonFinite("calibration probability".into()));
        }
        scores
            .get_mut(c)
            .ok_or_else(|| Error::Param(format!("category {c} out of range")))?
            .push(s);
    }
    if let Some(c) = scores.iter().position(Vec::is_empty) {
        return Err(Error::Param(format!("calibration category {c} is empty")));
    }
    for s in &mut scores {
        s.sort_by(f64::total_cmp);
    }
    Ok(Calibration { mode, scores })
}

/// `⌈(n+1)(1−α)⌉`-th smallest of sorted scores, or +∞ past the end.
pub fn conformal_quantile(sorted: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Param(format!("alpha {alpha} not in (0, 1)")));
    }
    let n = sorted.len();
    let k = (((n + 1) as f64) * (1.0 - alpha) - 1e-9).ceil() as usize;
    Ok(if k == 0 {
        f64::NEG_INFINITY
    } else if k > n {
        f64::INFINITY
    } else {
        sorted[k - 1]
    })
}

/// One q̂ per category.
pub fn threshold(cal: &Calibration, alpha: f64) -> Result<Vec<f64>> {
    cal.scores.iter().map(|s| conformal_quantile(s, alpha)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PredictionSet(pub [bool; 2]);

impl PredictionSet {
    pub fn contains(&self, c: u8) -> bool {
        self.0[usize::from(c)]
    }

    pub fn size(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &PredictionSet) -> bool {
        (0..2).all(|c| !self.0[c] || other.0[c])
    }
}

/// Class `c` is in the set iff `1 − p(c) ≤ q̂`. Under class-conditional
/// Mondrian calibration the candidate class picks its own q̂.
pub fn predict_sets(probs: &[[f64; 2]], q: &[f64]) -> Result<Vec<PredictionSet>> {
    let pick = |c: usize| -> Result<f64> {
        match q.len() {
            1 => Ok(q[0]),
            2 => Ok(q[c]),
            n => Err(Error::Param(format!("{n} thresholds for two classes"))),
        }
    };
    let (q0, q1) = (pick(0)?, pick(1)?);
    Ok(probs
        .iter()
        .map(|p| PredictionSet([1.0 - p[0] <= q0, 1.0 - p[1] <= q1]))
        .collect())
}

/// Mondrian sets under a feature taxonomy: each test instance uses the q̂ of
/// its own category.
pub fn predict_sets_by(probs: &[[f64; 2]], categories: &[usize], q: &[f64]) -> Result<Vec<PredictionSet>> {
    if probs.len() != categories.len() {
        return shape_err("test categories differ in length");
    }
    probs
        .iter()
        .zip(categories)
        .map(|(p, &c)| {
            let t = *q.get(c).ok_or_else(|| Error::Param(format!("category {c} out of range")))?;
            Ok(PredictionSet([1.0 - p[0] <= t, 1.0 - p[1] <= t]))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalReport {
    pub alpha: f64,
    pub mode: CalibrationMode,
    pub q_hat: Vec<f64>,
    pub n: usize,
    pub error_rate: f64,
    pub avg_set_size: f64,
    pub singleton_fraction: f64,
    pub empty_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetStats {
    pub error_rate: f64,
    pub avg_set_size: f64,
    pub singleton_fraction: f64,
    pub empty_count: usize,
}

pub fn evaluate_sets(sets: &[PredictionSet], labels: &[u8]) -> Result<SetStats> {
    if sets.len() != labels.len() {
        return shape_err(format!("{} sets for {} labels", sets.len(), labels.len()));
    }
    let n = sets.len().max(1) as f64;
    let misses = sets.iter().zip(labels).filter(|(s, &y)| !s.contains(y)).count();
    let total: usize = sets.iter().map(PredictionSet::size).sum();
    let singles = sets.iter().filter(|s| s.size() == 1).count();
    Ok(SetStats {
        error_rate: misses as f64 / n,
        avg_set_size: total as f64 / n,
        singleton_fraction: singles as f64 / n,
        empty_count: sets.iter().filter(|s| s.size() == 0).count(),
    })
}

/// Calibrate once and report every α.
pub fn conformal_table(
    cal_probs: &[[f64; 2]],
    cal_labels: &[u8],
    test_probs: &[[f64; 2]],
    test_labels: &[u8],
    alphas: &[f64],
    mode: CalibrationMode,
) -> Result<Vec<ConformalReport>> {
    let cal = calibrate(cal_probs, cal_labels, mode)?;
    alphas
        .iter()
        .map(|&alpha| {
            let q = threshold(&cal, alpha)?;
            let sets = predict_sets(test_probs, &q)?;
            let s = evaluate_sets(&sets, test_labels)?;
            Ok(ConformalReport {
                alpha,
                mode,
                q_hat: q,
                n: test_labels.len(),
                error_rate: s.error_rate,
                avg_set_size: s.avg_set_size,
                singleton_fraction: s.singleton_fraction,
                empty_count: s.empty_count,
            })
        })
        .collect()
}

/// Equal-width histogram of all calibration scores on [0, 1] as
/// `(lower edge, upper edge, count)`.
pub fn score_histogram(cal: &Calibration, bins: usize) -> Vec<(f64, f64, usize)> {
    let bins = bins.max(1);
    let mut counts = vec![0usize; bins];
    for &s in cal.scores.iter().flatten() {
        let b = ((s.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (i as f64 / bins as f64, (i + 1) as f64 / bins as f64, c))
        .collect()
}
