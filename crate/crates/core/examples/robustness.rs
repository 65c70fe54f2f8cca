//! Trains a linear model on disc-vs-ring images and measures the AUC drop
//! under five perturbations at three severities.

use fossil::data::{generate_tiny_images, images_to_dataset, robustness_eval, ImageSpec, PerturbationSpec};
use fossil::learner::{descend, LogisticModel};

fn main() -> fossil::Result<()> {
    let train = generate_tiny_images(&ImageSpec::new([200, 200], 16, 0))?;
    let test = generate_tiny_images(&ImageSpec::new([100, 100], 16, 1000))?;
    let ds = images_to_dataset(&train)?;
    let model = descend(
        LogisticModel::zeros(ds.dim()),
        ds.features(),
        ds.labels(),
        &vec![1.0; ds.len()],
        1e-3,
        0.5,
        300,
    )?;

    let table = robustness_eval(&model, &test, &PerturbationSpec::full_grid(), 0)?;
    println!("{:>15} {:>8} {:>8} {:>9} {:>10}", "perturbation", "severity", "auc", "accuracy", "delta_auc");
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    for r in &table.rows {
        println!(
            "{:>15} {:>8} {:>8} {:>9} {:>10}",
            r.perturbation,
            r.severity,
            fmt(r.auc),
            fmt(r.accuracy),
            fmt(r.delta_auc)
        );
    }
    Ok(())
}
