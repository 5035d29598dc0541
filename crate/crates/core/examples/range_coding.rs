//! Codes a short integer sequence under three models and decodes it back.

use ntc::coder::{CumulativeModel, Decoder, Encoder};
use ntc::models::{quantized_laplace, static_histogram_model, uniform_model, DistParams, SymbolAlphabet, ValueTransform};

fn main() -> ntc::Result<()> {
    let symbols = [12u32, 13, 12, 11, 14, 12, 12, 13, 90, 12, 11, 12];
    let alphabet = SymbolAlphabet::new(255);
    let transform = ValueTransform::Identity;

    let models = [
        ("uniform", uniform_model(alphabet)),
        ("histogram", static_histogram_model(alphabet, symbols)?),
        ("laplace(12, 1.5)", quantized_laplace(DistParams { mu: 12.0, b: 1.5 }, alphabet, transform)?),
    ];

    for (name, model) in &models {
        let ideal: f64 = symbols.iter().map(|&s| model.interval(s).cost_bits()).sum();
        let mut encoder = Encoder::new();
        for &s in &symbols {
            encoder.encode_symbol(model, s);
        }
        let stream = encoder.finish();

        let mut decoder = Decoder::new(&stream.bytes);
        let decoded: Vec<u32> = (0..symbols.len())
            .map(|_| decoder.decode_symbol(model))
            .collect::<ntc::Result<_>>()?;
        assert_eq!(decoded, symbols);

        println!(
            "{name:>18}: {:2} bytes, ideal {:6.1} bits, lossless",
            stream.bytes.len(),
            ideal
        );
    }
    Ok(())
}
