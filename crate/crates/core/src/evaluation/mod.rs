//! Classification metrics, calibration error and the rank/paired test battery.

mod metrics;
mod report;
mod stats;

pub use metrics::{
    confusion_metrics, delta_auc, ece, ece_from_confidences, roc_auc, ConfusionCounts,
    ConfusionMetrics, ScoredPredictions, DEFAULT_ECE_BINS,
};
pub use report::{
    compare_reports, EvaluationReport, MetricSummary, RunMetrics, RunStatus, StatsEntry,
    METRIC_NAMES,
};
pub use stats::{
    kruskal_wallis, mann_whitney_u, mann_whitney_u_with, mann_whitney_z, midranks,
    paired_t_test, wilcoxon_signed_rank, wilcoxon_signed_rank_with, PValueMethod, TestMethod,
    TestResult, EXACT_CUTOFF,
};
