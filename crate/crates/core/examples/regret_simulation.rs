//! Weighted projected online gradient descent on seeded convex streams:
//! regret against the hindsight optimum, the theoretical bound, and the
//! growth rate across horizons.

use fossil::oco::{horizon_sweep, FeasibleBall, GeneratedStream, LossFamily, StreamOrder};

fn main() -> fossil::Result<()> {
    let ball = FeasibleBall::new(vec![0.0, 0.0], 2.0)?;
    let recipes: Vec<GeneratedStream> = [LossFamily::Quadratic, LossFamily::Logistic]
        .iter()
        .flat_map(|&family| {
            (0..5).map(move |i| GeneratedStream {
                family,
                dim: 2,
                rounds: 1,
                seed: i,
                temperature: Some(1.0),
                order: StreamOrder::Shuffled,
            })
        })
        .collect();
    let sweep = horizon_sweep(&recipes, &ball, &[100, 1_000, 10_000])?;

    println!("{:>6} {:>10} {:>7} {:>12} {:>12}", "stream", "family", "T", "regret", "bound");
    for r in &sweep.runs {
        println!(
            "{:>6} {:>10} {:>7} {:>12.4} {:>12.4}",
            r.stream,
            format!("{:?}", r.family),
            r.horizon,
            r.final_regret,
            r.bound
        );
    }
    for (t, m) in &sweep.mean_regret {
        println!("mean regret at T = {t}: {m:.4}");
    }
    if let Some(fit) = &sweep.slope {
        println!("log-log slope {:.3}", fit.slope);
    }
    println!("every run within its bound: {}", sweep.all_within_bound());
    Ok(())
}
