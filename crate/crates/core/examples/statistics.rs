//! Rank and paired tests: exact and normal-approximation Mann-Whitney,
//! Kruskal-Wallis, Wilcoxon signed-rank and the paired t-test, then a full
//! per-metric comparison of two cross-validation reports.

use fossil::data::{generate_blobs, BlobSpec};
use fossil::evaluation::{
    compare_reports, kruskal_wallis, mann_whitney_u_with, paired_t_test, wilcoxon_signed_rank, PValueMethod,
};
use fossil::learner::{run_cv, CvConfig, TrainConfig};
use fossil::weighting::WeightingConfig;

fn main() -> fossil::Result<()> {
    let easy = [0.01, 0.03, 0.04, 0.08, 0.11, 0.12];
    let hard = [0.09, 0.21, 0.26, 0.33, 0.41, 0.47, 0.48];
    for method in [PValueMethod::Exact, PValueMethod::Normal] {
        let r = mann_whitney_u_with(&easy, &hard, method)?;
        println!("Mann-Whitney ({method:?}): U = {}, p = {:.5}", r.statistic, r.p_value);
    }
    let kw = kruskal_wallis(&[&easy, &hard])?;
    println!("Kruskal-Wallis: H = {:.4}, p = {:.5}", kw.statistic, kw.p_value);

    let before = [0.71, 0.69, 0.75, 0.73, 0.70, 0.74, 0.72];
    let after = [0.74, 0.70, 0.77, 0.72, 0.74, 0.78, 0.75];
    let t = paired_t_test(&after, &before)?;
    let diffs: Vec<f64> = after.iter().zip(&before).map(|(a, b)| a - b).collect();
    let w = wilcoxon_signed_rank(&diffs)?;
    println!("paired t = {:.3} (p = {:.4}); Wilcoxon W = {} (p = {:.4}, exact = {})", t.statistic, t.p_value, w.statistic, w.p_value, w.exact);

    let dataset = generate_blobs(&BlobSpec {
        label_noise: 0.1,
        ..BlobSpec::separated([126, 102], 5, 1.5, 1.0, 42)
    })?;
    let report = |weighting| -> fossil::Result<_> {
        let config = CvConfig {
            train: TrainConfig { weighting, ..TrainConfig::default() },
            ..CvConfig::default()
        };
        Ok(run_cv(&dataset, &config, &[42, 77, 123])?.report)
    };
    let fossil = report(WeightingConfig::fossil(1.0))?;
    let uniform = report(WeightingConfig::uniform())?;
    for e in compare_reports(&fossil, &uniform, "fossil", "uniform")? {
        match (e.statistic, e.p_value) {
            (Some(s), Some(p)) => println!("{:?} {:>11}: statistic {s:>8.3}, p = {p:.4}", e.method, e.metric),
            _ => println!("{:?} {:>11}: {}", e.method, e.metric, e.note.unwrap_or_default()),
        }
    }
    Ok(())
}
