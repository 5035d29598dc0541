//! Benchmarks every method on one synthetic cell, training both predictors
//! with a small budget first. Pass `spatial temporal` percentages as
//! arguments (default 100 100).

use ntc::bench::{bench_run, BenchConfig};
use ntc::datagen::{gen_synthetic, SynthConfig};
use ntc::neural::{train, ModelKind, TrainConfig};

fn main() -> ntc::Result<()> {
    let args: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let spatial = args.first().copied().unwrap_or(100);
    let temporal = args.get(1).copied().unwrap_or(100);
    let dataset = gen_synthetic(&SynthConfig {
        spatial_pct: spatial,
        temporal_pct: temporal,
        bins: 400,
        seed: 1,
        ..SynthConfig::default()
    })?;

    let budget = |kind| TrainConfig {
        kind,
        hidden_size: 8,
        epochs: 6,
        learning_rate: 3e-3,
        final_lr_fraction: 0.05,
        seed: 2,
        ..TrainConfig::default()
    };
    let rnn = train(&dataset, &budget(ModelKind::SingleLinkRnn))?;
    let stgnn = train(&dataset, &budget(ModelKind::NetworkStgnn))?;

    let report = bench_run(
        &dataset,
        &BenchConfig {
            rnn: Some(&rnn),
            stgnn: Some(&stgnn),
            ..BenchConfig::default()
        },
    )?;
    println!("spatial {spatial}%, temporal {temporal}%");
    print!("{}", report.to_text());
    Ok(())
}
