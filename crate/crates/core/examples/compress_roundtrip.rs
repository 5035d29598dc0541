//! Compresses one dataset with every non-neural method, writes the
//! containers to disk, reads them back and checks losslessness.

use ntc::datagen::{gen_synthetic, SynthConfig};
use ntc::metrics::compression_ratio;
use ntc::bench::raw_matrix_bytes;
use ntc::pipeline::{compress, decompress, CodecSpec, CompressedContainer, Mode};

fn main() -> ntc::Result<()> {
    let dataset = gen_synthetic(&SynthConfig {
        bins: 400,
        seed: 11,
        ..SynthConfig::default()
    })?;
    let raw = raw_matrix_bytes(&dataset).len() as u64;
    let dir = std::env::temp_dir().join(format!("ntc-roundtrip-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;

    let specs = [
        ("uniform", CodecSpec::uniform()),
        ("static_ac single", CodecSpec::static_ac(Mode::SingleLink)),
        ("static_ac network", CodecSpec::static_ac(Mode::NetworkWide)),
        ("adaptive_ac single", CodecSpec::adaptive_ac(Mode::SingleLink, 32)),
        ("adaptive_ac network", CodecSpec::adaptive_ac(Mode::NetworkWide, 32)),
    ];
    println!("raw matrix: {raw} bytes");
    for (i, (name, spec)) in specs.iter().enumerate() {
        let path = dir.join(format!("{i}.ntcc"));
        compress(&dataset, spec)?.save(&path)?;
        let size = std::fs::metadata(&path)?.len();
        let restored = decompress(&CompressedContainer::load(&path)?, None)?;
        assert_eq!(restored, dataset);
        println!("{name:>20}: {size:6} bytes, CR {:.3}", compression_ratio(raw, size)?);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
