//! Calibration and threshold metrics: ECE on calibrated and overconfident
//! predictions, ROC AUC with ties, and the confusion-matrix summaries.

use fossil::evaluation::{confusion_metrics, ece, ece_from_confidences, roc_auc, ScoredPredictions, DEFAULT_ECE_BINS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> fossil::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 20_000;
    let mut calibrated = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut overconfident = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let p: f64 = rng.random();
        let y = u8::from(rng.random::<f64>() < p);
        calibrated.0.push(p);
        calibrated.1.push(y);
        // push every score halfway towards 0 or 1
        overconfident.0.push(if p > 0.5 { (1.0 + p) / 2.0 } else { p / 2.0 });
        overconfident.1.push(y);
    }
    let calibrated = ScoredPredictions::new(calibrated.0, calibrated.1)?;
    let overconfident = ScoredPredictions::new(overconfident.0, overconfident.1)?;
    println!("ECE, sampled calibrated scores: {:.4}", ece(&calibrated, DEFAULT_ECE_BINS)?);
    println!("ECE, overconfident scores:      {:.4}", ece(&overconfident, DEFAULT_ECE_BINS)?);
    println!(
        "AUC is rank-based, so both give {:.4} and {:.4}",
        roc_auc(&calibrated)?,
        roc_auc(&overconfident)?
    );

    // two bins: conf 0.9 with 50% correct, conf 0.6 with 80% correct
    let conf = [0.9, 0.9, 0.9, 0.9, 0.6, 0.6, 0.6, 0.6, 0.6];
    let correct = [true, true, false, false, true, true, true, true, false];
    println!("hand-built example ECE: {:.4}", ece_from_confidences(&conf, &correct, DEFAULT_ECE_BINS)?);

    let tied = ScoredPredictions::new(vec![0.2, 0.5, 0.5, 0.5, 0.9], vec![0, 0, 1, 1, 1])?;
    println!("AUC with tied scores: {:.4}", roc_auc(&tied)?);
    let cm = confusion_metrics(&tied, 0.5);
    println!(
        "at threshold 0.5: accuracy {:?}, sensitivity {:?}, specificity {:?}, f1 {:?}",
        cm.accuracy, cm.sensitivity, cm.specificity, cm.f1
    );
    Ok(())
}
