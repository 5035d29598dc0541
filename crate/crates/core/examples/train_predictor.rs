//! Trains a small ST-GNN on synthetic traffic, round-trips it through the
//! model file format and shows how revealing links sharpens the predictions
//! for the rest of a bin.

use ntc::datagen::{gen_synthetic, SynthConfig};
use ntc::neural::{load_model, model_hash, save_model, train_with_report, BinPredictor, ModelKind, TrainConfig};
use ntc::LinkGraph;

fn main() -> ntc::Result<()> {
    let dataset = gen_synthetic(&SynthConfig {
        bins: 300,
        seed: 3,
        ..SynthConfig::default()
    })?;
    let config = TrainConfig {
        kind: ModelKind::NetworkStgnn,
        hidden_size: 8,
        epochs: 8,
        learning_rate: 3e-3,
        final_lr_fraction: 0.1,
        seed: 1,
        ..TrainConfig::default()
    };
    let (model, report) = train_with_report(&dataset, &config)?;
    for (i, e) in report.epochs.iter().enumerate() {
        println!("epoch {i:2}: train {:7.3}  eval {:7.3}", e.train_loss, e.eval_loss);
    }

    let dir = std::env::temp_dir().join(format!("ntc-train-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("stgnn.ntcm");
    save_model(&model, &path)?;
    let restored = load_model(&path)?;
    assert_eq!(model_hash(&model), model_hash(&restored));
    println!("model file {} bytes", std::fs::metadata(&path)?.len());
    std::fs::remove_dir_all(&dir)?;

    let graph = LinkGraph::new(dataset.topology());
    let label = dataset.num_bins() - 1;
    let window = dataset.window(label, model.w_past);
    let mut predictor = BinPredictor::new(&restored, &graph, &window.past)?;
    let mean_b = |p: &BinPredictor<'_>| {
        let open: Vec<f64> = (0..graph.num_links())
            .filter(|&l| !p.mask().is_known(l))
            .map(|l| p.params()[l].b)
            .collect();
        open.iter().sum::<f64>() / open.len() as f64
    };
    println!("mean scale with nothing revealed: {:.4}", mean_b(&predictor));
    for link in 0..graph.num_links() / 2 {
        predictor.reveal(link, window.label[link]);
    }
    println!("mean scale with half revealed:    {:.4}", mean_b(&predictor));
    Ok(())
}
