use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::metrics::{confusion_metrics, ece, roc_auc, ScoredPredictions};
use crate::evaluation::stats::{paired_t_test, wilcoxon_signed_rank, TestMethod};

/// Metrics reported per run, in report order.
pub const METRIC_NAMES: [&str; 8] = [
    "auc",
    "accuracy",
    "sensitivity",
    "specificity",
    "f1",
    "ppv",
    "npv",
    "ece",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed { message: String },
}

/// Validation metrics of one (seed, fold) training run. Undefined metrics
/// are `None` (`null` in JSON).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub fold: usize,
    pub status: RunStatus,
    pub metrics: BTreeMap<String, Option<f64>>,
}

impl RunMetrics {
    /// Computes every entry of [`METRIC_NAMES`] from validation predictions.
    pub fn evaluate(seed: u64, fold: usize, pred: &ScoredPredictions) -> Self {
        let cm = confusion_metrics(pred, 0.5);
        let mut metrics = BTreeMap::new();
        metrics.insert("auc".to_string(), roc_auc(pred).ok());
        metrics.insert("accuracy".to_string(), cm.accuracy);
        metrics.insert("sensitivity".to_string(), cm.sensitivity);
        metrics.insert("specificity".to_string(), cm.specificity);
        metrics.insert("f1".to_string(), cm.f1);
        metrics.insert("ppv".to_string(), cm.ppv);
        metrics.insert("npv".to_string(), cm.npv);
        metrics.insert("ece".to_string(), ece(pred, 15).ok());
        Self {
            seed,
            fold,
            status: RunStatus::Ok,
            metrics,
        }
    }

    pub fn failed(seed: u64, fold: usize, message: impl Into<String>) -> Self {
        Self {
            seed,
            fold,
            status: RunStatus::Failed {
                message: message.into(),
            },
            metrics: BTreeMap::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).copied().flatten()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// One entry per run, aligned with [`EvaluationReport::runs`].
    pub per_fold: Vec<Option<f64>>,
}

impl MetricSummary {
    fn from_values(per_fold: Vec<Option<f64>>) -> Self {
        let defined: Vec<f64> = per_fold.iter().flatten().copied().collect();
        let n = defined.len() as f64;
        let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / n);
        let std = match mean {
            Some(m) if defined.len() > 1 => Some(
                (defined.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt(),
            ),
            _ => None,
        };
        Self {
            mean,
            std,
            per_fold,
        }
    }
}

/// Cross-validated metrics aggregated over folds and seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config_hash: String,
    /// Sorted by (seed, fold).
    pub runs: Vec<RunMetrics>,
    pub metrics: BTreeMap<String, MetricSummary>,
}

impl EvaluationReport {
    /// Builds the report; runs may arrive in any order.
    pub fn aggregate(config_hash: impl Into<String>, mut runs: Vec<RunMetrics>) -> Self {
        runs.sort_by_key(|r| (r.seed, r.fold));
        let metrics = METRIC_NAMES
            .iter()
            .map(|&name| {
                let values = runs.iter().map(|r| r.get(name)).collect();
                (name.to_string(), MetricSummary::from_values(values))
            })
            .collect();
        Self {
            config_hash: config_hash.into(),
            runs,
            metrics,
        }
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).and_then(|m| m.mean)
    }

    pub fn failed_runs(&self) -> impl Iterator<Item = &RunMetrics> {
        self.runs.iter().filter(|r| !r.is_ok())
    }
}

/// One row of a paired comparison between two reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsEntry {
    pub comparison: String,
    pub metric: String,
    pub method: TestMethod,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub exact: Option<bool>,
    pub n_pairs: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

fn key_set(r: &EvaluationReport) -> BTreeMap<(u64, usize), &RunMetrics> {
    r.runs.iter().filter(|r| r.is_ok()).map(|r| ((r.seed, r.fold), r)).collect()
}

/// Paired t-test and Wilcoxon signed-rank test of `a - b` for every metric,
/// pairing runs by (seed, fold).
///
/// Both reports must contain the same set of successful (seed, fold) runs;
/// otherwise the error lists the unmatched pairs. Tests that cannot be
/// computed (zero variance, all differences zero) are reported with a note
/// instead of a p-value.
pub fn compare_reports(
    a: &EvaluationReport,
    b: &EvaluationReport,
    label_a: &str,
    label_b: &str,
) -> Result<Vec<StatsEntry>> {
    let runs_a = key_set(a);
    let runs_b = key_set(b);
    let missing: Vec<String> = runs_a
        .keys()
        .filter(|k| !runs_b.contains_key(k))
        .map(|(s, f)| format!("seed {s} fold {f} missing from {label_b}"))
        .chain(
            runs_b
                .keys()
                .filter(|k| !runs_a.contains_key(k))
                .map(|(s, f)| format!("seed {s} fold {f} missing from {label_a}")),
        )
        .collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "reports do not share fold/seed structure: {}",
            missing.join("; ")
        )));
    }

    let comparison = format!("{label_a} vs {label_b}");
    let mut out = Vec::new();
    for method in [TestMethod::PairedT, TestMethod::WilcoxonSignedRank] {
        for &metric in &METRIC_NAMES {
            let (xs, ys): (Vec<f64>, Vec<f64>) = runs_a
                .iter()
                .filter_map(|(k, ra)| Some((ra.get(metric)?, runs_b[k].get(metric)?)))
                .unzip();
            let result = match method {
                TestMethod::PairedT => paired_t_test(&xs, &ys),
                _ => {
                    let d: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| x - y).collect();
                    wilcoxon_signed_rank(&d)
                }
            };
            let entry = match result {
                Ok(r) => StatsEntry {
                    comparison: comparison.clone(),
                    metric: metric.to_string(),
                    method,
                    statistic: Some(r.statistic),
                    p_value: Some(r.p_value),
                    exact: Some(r.exact),
                    n_pairs: xs.len(),
                    note: None,
                },
                Err(e) => StatsEntry {
                    comparison: comparison.clone(),
                    metric: metric.to_string(),
                    method,
                    statistic: None,
                    p_value: None,
                    exact: None,
                    n_pairs: xs.len(),
                    note: Some(e.to_string()),
                },
            };
            out.push(entry);
        }
    }
    Ok(out)
}
