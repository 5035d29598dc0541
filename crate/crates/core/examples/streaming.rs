//! Feeds bins one at a time into a compression session, as a collector
//! would, and shows that the bytes flushed along the way plus the final
//! container match batch compression exactly.

use ntc::datagen::{gen_synthetic, SynthConfig};
use ntc::pipeline::{compress, CodecSpec, CompressSession, Mode};

fn main() -> ntc::Result<()> {
    let dataset = gen_synthetic(&SynthConfig {
        bins: 200,
        seed: 5,
        ..SynthConfig::default()
    })?;
    let spec = CodecSpec::adaptive_ac(Mode::NetworkWide, 16);
    let mut session = CompressSession::new(&spec, dataset.topology().clone(), dataset.v_max(), dataset.bin_duration_s())?;

    let mut flushed = 0usize;
    for (t, row) in dataset.rows().enumerate() {
        let drained = session.push_bin(row)?;
        flushed += drained.iter().map(Vec::len).sum::<usize>();
        if (t + 1) % 50 == 0 {
            println!("after {:3} bins: {flushed:6} bytes already emitted", t + 1);
        }
    }
    let latencies = session.latencies().to_vec();
    let streamed = session.finish()?;
    let batch = compress(&dataset, &spec)?;
    assert_eq!(streamed.to_bytes()?, batch.to_bytes()?);

    let mean = latencies.iter().map(|d| d.as_secs_f64()).sum::<f64>() / latencies.len() as f64;
    println!("container {} bytes, identical to batch; mean bin latency {:.2e} s", batch.to_bytes()?.len(), mean);
    Ok(())
}
