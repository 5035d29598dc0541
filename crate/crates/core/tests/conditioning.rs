use ntc::datagen::{gen_synthetic, SynthConfig};
use ntc::neural::{laplace_nll, train, ModelKind, PredictorModel, TrainConfig};
use ntc::{LinkGraph, Mask, TrafficDataset};

fn trained() -> (TrafficDataset, PredictorModel) {
    let dataset = gen_synthetic(&SynthConfig {
        bins: 240,
        seed: 21,
        ..SynthConfig::default()
    })
    .unwrap();
    let config = TrainConfig {
        kind: ModelKind::NetworkStgnn,
        hidden_size: 8,
        epochs: 12,
        learning_rate: 3e-3,
        final_lr_fraction: 0.05,
        seed: 4,
        ..TrainConfig::default()
    };
    let model = train(&dataset, &config).unwrap();
    (dataset, model)
}

#[test]
fn known_neighbours_move_the_prediction_and_others_do_not() {
    let (dataset, model) = trained();
    let graph = LinkGraph::new(dataset.topology());
    let target = 0;
    let neighbour = graph.neighbors(target)[0];
    let far = (0..graph.num_links())
        .find(|&l| l != target && !graph.neighbors(target).contains(&l))
        .unwrap();

    let mut window = dataset.window(dataset.num_bins() - 1, model.w_past);
    let mut known = vec![true; graph.num_links()];
    known[target] = false;
    window.mask = Mask::from_known(known);
    let base = model.stgnn_forward(&window, &graph).unwrap()[target];

    let mut nudged = window.clone();
    nudged.label[neighbour] += 50;
    let moved = model.stgnn_forward(&nudged, &graph).unwrap()[target];
    assert_ne!(base, moved);

    let mut distant = window.clone();
    distant.label[far] += 50;
    let same = model.stgnn_forward(&distant, &graph).unwrap()[target];
    assert_eq!(base, same, "one message round cannot reach beyond direct neighbours");
}

#[test]
fn revealing_the_rest_of_the_bin_lowers_the_loss() {
    let (dataset, model) = trained();
    let graph = LinkGraph::new(dataset.topology());
    let links = graph.num_links();
    let (mut alone, mut informed) = (0.0, 0.0);
    let first = dataset.num_bins() - 60;
    for t in first..dataset.num_bins() {
        let mut window = dataset.window(t, model.w_past);
        window.mask = Mask::unknown(links);
        let blind = model.stgnn_forward(&window, &graph).unwrap();
        for l in 0..links {
            let x = model.transform.value(window.label[l]);
            alone += laplace_nll(blind[l], x);
            let mut known = vec![true; links];
            known[l] = false;
            window.mask = Mask::from_known(known);
            informed += laplace_nll(model.stgnn_forward(&window, &graph).unwrap()[l], x);
        }
    }
    assert!(
        informed < alone,
        "mean NLL with neighbours known {} vs none known {}",
        informed / (60 * links) as f64,
        alone / (60 * links) as f64
    );
}
