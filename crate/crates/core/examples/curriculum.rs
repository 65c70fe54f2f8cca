//! Scores probe probabilities, splits them into four quantile stages and
//! checks that the stages really differ in difficulty.

use fossil::difficulty::{class_bias_check, stratify, validate_stages, DifficultyMetric, DifficultyRecord, ProbabilityVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> fossil::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut records = Vec::new();
    for i in 0..228 {
        let label = usize::from(i >= 126);
        let p: f64 = rng.random_range(0.02..0.98);
        let probs = ProbabilityVector::binary(p)?;
        let score = DifficultyMetric::Softmax.score(&probs);
        records.push(DifficultyRecord::new(format!("s{i:04}"), score, label));
    }

    let partition = stratify(&records, 4)?;
    partition.annotate(&mut records);
    println!("thresholds: {:?}", partition.thresholds);
    println!("stage sizes: {:?}", partition.stage_sizes());

    let report = validate_stages(&partition, &records)?;
    for pair in &report.pairwise {
        println!(
            "stage {} vs {}: U = {}, p = {:.3e}",
            pair.lower, pair.upper, pair.result.statistic, pair.result.p_value
        );
    }
    println!(
        "Kruskal-Wallis H = {:.2}, p = {:.3e}",
        report.kruskal_wallis.statistic, report.kruskal_wallis.p_value
    );
    let bias = class_bias_check(&records)?;
    println!("class bias: U = {}, p = {:.3}", bias.statistic, bias.p_value);
    Ok(())
}
