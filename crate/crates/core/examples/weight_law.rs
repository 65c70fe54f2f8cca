//! Exponential sample weights across difficulties and temperatures, and a
//! decaying temperature schedule.

use fossil::weighting::{fossil_weight, weighted_loss, TemperatureSchedule, WeightVector};

fn main() -> fossil::Result<()> {
    let temperatures = [0.25, 0.5, 1.0, 2.0, 5.0];
    print!("{:>6}", "d \\ T");
    for t in temperatures {
        print!("{t:>9}");
    }
    println!();
    for d in [0.0, 0.1, 0.3, 0.5, 1.0] {
        print!("{d:>6}");
        for t in temperatures {
            print!("{:>9.4}", fossil_weight(d, t)?);
        }
        println!();
    }

    let difficulties = [0.02, 0.15, 0.35, 0.49];
    let losses = [0.1, 0.4, 0.9, 1.6];
    for t in [0.5, 1.0, 5.0] {
        let w = WeightVector::new(difficulties.iter().map(|&d| fossil_weight(d, t)).collect::<Result<_, _>>()?)?;
        println!("T = {t}: weighted loss {:.4}", weighted_loss(&losses, &w)?);
    }
    println!("uniform: weighted loss {:.4}", weighted_loss(&losses, &WeightVector::uniform(4))?);

    let schedule = TemperatureSchedule::exponential(2.0, 0.9, 0.5);
    schedule.validate()?;
    let ts: Vec<String> = (0..20).step_by(4).map(|e| format!("{:.3}", schedule.at(e))).collect();
    println!("exponential schedule at epochs 0, 4, ..., 16: {}", ts.join(", "));
    Ok(())
}
