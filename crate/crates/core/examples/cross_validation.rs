//! Stratified five-fold cross-validation over three seeds on an imbalanced
//! blob dataset, once with exponential weights and once uniformly.

use fossil::data::{generate_blobs, BlobSpec};
use fossil::learner::{run_cv, CvConfig, TrainConfig};
use fossil::weighting::WeightingConfig;

fn main() -> fossil::Result<()> {
    let spec = BlobSpec {
        label_noise: 0.1,
        ..BlobSpec::separated([126, 102], 5, 1.5, 1.0, 42)
    };
    let dataset = generate_blobs(&spec)?;
    let seeds = [42, 77, 123];

    for (name, weighting) in [("fossil", WeightingConfig::fossil(1.0)), ("uniform", WeightingConfig::uniform())] {
        let config = CvConfig {
            train: TrainConfig { weighting, ..TrainConfig::default() },
            ..CvConfig::default()
        };
        let out = run_cv(&dataset, &config, &seeds)?;
        let fold0 = &out.plans[0].folds[0];
        println!(
            "{name}: {} runs, fold 0 of seed 42 trains on {:?} and validates on {:?}",
            out.runs.len(),
            fold0.train_counts,
            fold0.val_counts
        );
        for metric in ["auc", "accuracy", "f1", "ece"] {
            let s = &out.report.metrics[metric];
            println!(
                "  {metric:>8}: {:.4} +- {:.4}",
                s.mean.unwrap_or(f64::NAN),
                s.std.unwrap_or(f64::NAN)
            );
        }
        let epochs: Vec<usize> = out
            .runs
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|o| o.best_epoch))
            .collect();
        println!("  best epochs: {epochs:?}");
    }
    Ok(())
}
