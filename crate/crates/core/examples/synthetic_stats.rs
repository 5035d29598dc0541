//! Generates synthetic NSFNet traffic at a few correlation settings and
//! prints the correlation and drift diagnostics of each.

use ntc::datagen::{correlation_report, gen_synthetic, SynthConfig};

fn main() -> ntc::Result<()> {
    println!("spatial temporal  median|r|  median drift");
    for (spatial, temporal) in [(0, 0), (100, 0), (0, 100), (100, 100)] {
        let config = SynthConfig {
            spatial_pct: spatial,
            temporal_pct: temporal,
            seed: 7,
            ..SynthConfig::default()
        };
        let dataset = gen_synthetic(&config)?;
        let report = correlation_report(&dataset)?;
        println!(
            "{spatial:>7} {temporal:>8}  {:>9.3}  {:>12.3}",
            report.median_abs_pearson().unwrap_or(f64::NAN),
            report.median_drift().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
