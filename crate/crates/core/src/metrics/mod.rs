//! Binary classification metrics, ROC and reliability curves, and the
//! paired t-test used to compare models across folds.

mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

pub use stats::{
    bonferroni, ln_gamma, mean_std, paired_t_test, regularized_incomplete_beta, student_t_cdf, TTest,
};

/// Class 1 is the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Swap the roles of the two classes.
    pub fn relabel(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }
}

pub fn confusion(labels: &[u8], preds: &[u8]) -> Result<ConfusionMatrix> {
    if labels.len() != preds.len() {
        return shape_err(format!("{} labels for {} predictions", labels.len(), preds.len()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&y, &p) in labels.iter().zip(preds) {
        match (y == 1, p == 1) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroScores {
    pub ma_p: f64,
    pub ma_r: f64,
    pub ma_f1: f64,
    pub accuracy: f64,
}

/// Unweighted mean over both classes of precision, recall and F1. A zero
/// denominator makes that class's term 0.
pub fn macro_scores(cm: &ConfusionMatrix) -> MacroScores {
    let per_class = |tp: f64, fp: f64, fn_: f64| {
        let p = ratio(tp, tp + fp);
        let r = ratio(tp, tp + fn_);
        (p, r, ratio(2.0 * p * r, p + r))
    };
    let (tp, fp, fn_, tn) = (cm.tp as f64, cm.fp as f64, cm.fn_ as f64, cm.tn as f64);
    let (p1, r1, f1) = per_class(tp, fp, fn_);
    let (p0, r0, f0) = per_class(tn, fn_, fp);
    MacroScores {
        ma_p: (p0 + p1) / 2.0,
        ma_r: (r0 + r1) / 2.0,
        ma_f1: (f0 + f1) / 2.0,
        accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
    }
}

/// Matthews correlation; 0 when any marginal is empty.
pub fn mcc(cm: &ConfusionMatrix) -> f64 {
    let (tp, fp, fn_, tn) = (cm.tp as f64, cm.fp as f64, cm.fn_ as f64, cm.tn as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if den == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / den.sqrt()
    }
}

/// Cohen's kappa; 0 when chance agreement is 1.
pub fn kappa(cm: &ConfusionMatrix) -> f64 {
    let n = cm.total() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (tp, fp, fn_, tn) = (cm.tp as f64, cm.fp as f64, cm.fn_ as f64, cm.tn as f64);
    let po = (tp + tn) / n;
    let pe = ((tp + fp) * (tp + fn_) + (tn + fn_) * (tn + fp)) / (n * n);
    if pe == 1.0 {
        0.0
    } else {
        (po - pe) / (1.0 - pe)
    }
}

fn check_binary(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return shape_err(format!("{} scores for {} labels", scores.len(), labels.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate("ROC needs both classes".into()));
    }
    Ok((pos, neg))
}

/// Area under the ROC curve as the Mann–Whitney statistic with mid-ranks
/// for ties.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_binary(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Threshold sweep from +∞ down through every distinct score.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<RocPoint>> {
    let (pos, neg) = check_binary(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut pts = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (k, &i) in order.iter().enumerate() {
        if labels[i] == 1 {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_tie = k + 1 == order.len() || scores[order[k + 1]] != scores[i];
        if last_of_tie {
            pts.push(RocPoint {
                threshold: scores[i],
                fpr: fp as f64 / neg as f64,
                tpr: tp as f64 / pos as f64,
            });
        }
    }
    Ok(pts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub mean_predicted: f64,
    pub fraction_positive: f64,
    pub count: usize,
}

/// Equal-width bins on [0, 1]; empty bins are omitted, 1.0 falls in the last.
pub fn calibration_curve(probs: &[f64], labels: &[u8], bins: usize) -> Result<Vec<CalibrationBin>> {
    if probs.len() != labels.len() {
        return shape_err(format!("{} probabilities for {} labels", probs.len(), labels.len()));
    }
    if bins == 0 {
        return Err(Error::Param("calibration needs at least one bin".into()));
    }
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Param("probabilities must lie in [0, 1]".into()));
    }
    let mut acc = vec![(0.0, 0usize, 0usize); bins];
    for (&p, &y) in probs.iter().zip(labels) {
        let b = ((p * bins as f64) as usize).min(bins - 1);
        acc[b].0 += p;
        acc[b].1 += usize::from(y == 1);
        acc[b].2 += 1;
    }
    Ok(acc
        .into_iter()
        .filter(|a| a.2 > 0)
        .map(|(s, pos, n)| CalibrationBin {
            mean_predicted: s / n as f64,
            fraction_positive: pos as f64 / n as f64,
            count: n,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ma_p: f64,
    pub ma_r: f64,
    pub ma_f1: f64,
    pub accuracy: f64,
    pub roc_auc: f64,
    pub mcc: f64,
    pub kappa: f64,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub const COLUMNS: [&'static str; 7] = ["maP", "maR", "maF1", "accuracy", "roc_auc", "mcc", "kappa"];

    /// Scores are class-1 probabilities; labels follow the strict `> tau` rule.
    pub fn compute(scores: &[f64], labels: &[u8], tau: f64) -> Result<Self> {
        let preds: Vec<u8> = scores.iter().map(|&s| u8::from(s > tau)).collect();
        let cm = confusion(labels, &preds)?;
        let m = macro_scores(&cm);
        Ok(Self {
            ma_p: m.ma_p,
            ma_r: m.ma_r,
            ma_f1: m.ma_f1,
            accuracy: m.accuracy,
            roc_auc: roc_auc(scores, labels)?,
            mcc: mcc(&cm),
            kappa: kappa(&cm),
            confusion: cm,
        })
    }

    pub fn values(&self) -> [f64; 7] {
        [self.ma_p, self.ma_r, self.ma_f1, self.accuracy, self.roc_auc, self.mcc, self.kappa]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionMatrix {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    #[test]
    fn confusion_counts() {
        let c = confusion(&[1, 1, 1, 0, 0], &[1, 1, 1, 1, 1]).unwrap();
        assert_eq!(c, cm(3, 2, 0, 0));
        assert!(confusion(&[1], &[]).is_err());
    }

    #[test]
    fn paper_fractions_give_reported_accuracy() {
        // 40.22 / 51.81 / 4.35 / 3.62 % of 184
        let c = cm(95, 8, 7, 74);
        let m = macro_scores(&c);
        assert!((m.accuracy - 0.9185).abs() < 0.005);
        assert!((m.accuracy * 100.0 - 92.03).abs() < 0.5);
    }

    #[test]
    fn hand_arithmetic() {
        let c = cm(40, 10, 20, 30);
        let m = macro_scores(&c);
        let p1 = 40.0 / 50.0;
        let r1 = 40.0 / 60.0;
        let p0 = 30.0 / 50.0;
        let r0 = 30.0 / 40.0;
        assert!((m.ma_p - (p1 + p0) / 2.0).abs() < 1e-15);
        assert!((m.ma_r - (r1 + r0) / 2.0).abs() < 1e-15);
        assert_eq!(m.accuracy, 0.7);
        let c = cm(40, 5, 10, 45);
        let want = (40.0 * 45.0 - 5.0 * 10.0) / ((45.0 * 50.0 * 50.0 * 55.0) as f64).sqrt();
        assert!((mcc(&c) - want).abs() < 1e-15);
        assert_eq!(mcc(&cm(5, 0, 0, 5)), 1.0);
        assert_eq!(mcc(&cm(0, 5, 5, 0)), -1.0);
        assert!(kappa(&cm(3, 2, 0, 0)).abs() < 1e-12);
        assert_eq!(kappa(&cm(5, 0, 0, 5)), 1.0);
    }

    #[test]
    fn auc_edges() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 4], &[0, 1, 0, 1]).unwrap(), 0.5);
        assert!(roc_auc(&[0.5, 0.6], &[1, 1]).is_err());
        let s = [0.3, 0.1, 0.7, 0.7, 0.2, 0.9];
        let y = [0, 1, 1, 0, 0, 1];
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        assert!((roc_auc(&s, &y).unwrap() + roc_auc(&neg, &y).unwrap() - 1.0).abs() < 1e-12);
        let curve = roc_curve(&s, &y).unwrap();
        assert_eq!(curve.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
    }

    #[test]
    fn calibration_bins() {
        let c = calibration_curve(&[1.0; 5], &[1; 5], 10).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].mean_predicted, c[0].fraction_positive), (1.0, 1.0));
        let p: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let y: Vec<u8> = (0..100).map(|i| u8::from(i % 2 == 0)).collect();
        let c = calibration_curve(&p, &y, 7).unwrap();
        assert_eq!(c.iter().map(|b| b.count).sum::<usize>(), 100);
    }
}
