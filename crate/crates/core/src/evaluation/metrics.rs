use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::stats::midranks;

pub const DEFAULT_ECE_BINS: usize = 15;

/// Positive-class scores paired with binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPredictions {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoredPredictions {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: scores.len(),
                got: labels.len(),
            });
        }
        if scores.is_empty() {
            return Err(Error::Validation("no predictions".into()));
        }
        if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Validation(format!("score {s} outside [0, 1]")));
        }
        if let Some(l) = labels.iter().find(|l| **l > 1) {
            return Err(Error::Validation(format!("label {l} is not binary")));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Area under the ROC curve via the rank-sum identity, ties credited 0.5.
pub fn roc_auc(pred: &ScoredPredictions) -> Result<f64> {
    let n_pos = pred.labels.iter().filter(|l| **l == 1).count();
    let n_neg = pred.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs both classes present".into(),
        ));
    }
    let (ranks, _) = midranks(&pred.scores);
    let pos_rank_sum: f64 = ranks
        .iter()
        .zip(&pred.labels)
        .filter(|(_, l)| **l == 1)
        .map(|(r, _)| r)
        .sum();
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// `auc(clean) - auc(perturbed)`.
pub fn delta_auc(clean: &ScoredPredictions, perturbed: &ScoredPredictions) -> Result<f64> {
    Ok(roc_auc(clean)? - roc_auc(perturbed)?)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_predictions(pred: &ScoredPredictions, threshold: f64) -> Self {
        let mut c = Self::default();
        for (&s, &l) in pred.scores.iter().zip(&pred.labels) {
            match (s >= threshold, l == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Rates derived from the counts. `None` marks a zero denominator.
    pub fn metrics(&self) -> ConfusionMetrics {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        let sensitivity = ratio(self.tp, self.tp + self.fn_);
        let ppv = ratio(self.tp, self.tp + self.fp);
        let f1 = match (ppv, sensitivity) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        ConfusionMetrics {
            counts: *self,
            accuracy: ratio(self.tp + self.tn, self.total()),
            sensitivity,
            specificity: ratio(self.tn, self.tn + self.fp),
            ppv,
            npv: ratio(self.tn, self.tn + self.fn_),
            f1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub counts: ConfusionCounts,
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub f1: Option<f64>,
}

/// Thresholded classification metrics; a score `>= threshold` predicts the
/// positive class.
pub fn confusion_metrics(pred: &ScoredPredictions, threshold: f64) -> ConfusionMetrics {
    ConfusionCounts::from_predictions(pred, threshold).metrics()
}

/// Expected calibration error over `n_bins` equal-width bins.
///
/// The confidence of a prediction is the probability of the predicted label,
/// `max(p, 1 - p)`, and it is correct when the 0.5-thresholded prediction
/// matches the label.
pub fn ece(pred: &ScoredPredictions, n_bins: usize) -> Result<f64> {
    let (conf, correct): (Vec<f64>, Vec<bool>) = pred
        .scores
        .iter()
        .zip(&pred.labels)
        .map(|(&p, &l)| {
            let predicted = u8::from(p >= 0.5);
            (p.max(1.0 - p), predicted == l)
        })
        .unzip();
    ece_from_confidences(&conf, &correct, n_bins)
}

/// ECE from explicit confidences and correctness flags.
///
/// Bins are right-closed, `((b-1)/B, b/B]`, with 0 falling in the first bin.
/// Empty bins contribute nothing. The result does not depend on input order.
pub fn ece_from_confidences(conf: &[f64], correct: &[bool], n_bins: usize) -> Result<f64> {
    if n_bins < 1 {
        return Err(Error::Parameter("ECE needs at least one bin".into()));
    }
    if conf.len() != correct.len() {
        return Err(Error::DimensionMismatch {
            expected: conf.len(),
            got: correct.len(),
        });
    }
    if conf.is_empty() {
        return Err(Error::Validation("no predictions".into()));
    }
    if let Some(c) = conf.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::Validation(format!("confidence {c} outside [0, 1]")));
    }

    // Accumulate in sorted order so float sums are independent of input order.
    let mut pairs: Vec<(f64, bool)> = conf.iter().copied().zip(correct.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut conf_sum = vec![0.0; n_bins];
    let mut hits = vec![0usize; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (c, ok) in pairs {
        let b = ((c * n_bins as f64).ceil() as usize).clamp(1, n_bins) - 1;
        conf_sum[b] += c;
        hits[b] += usize::from(ok);
        counts[b] += 1;
    }
    let n = conf.len() as f64;
    Ok((0..n_bins)
        .filter(|&b| counts[b] > 0)
        .map(|b| {
            let m = counts[b] as f64;
            (m / n) * (hits[b] as f64 / m - conf_sum[b] / m).abs()
        })
        .sum())
}
