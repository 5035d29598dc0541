use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::predictor::{ModelKind, PredictorModel, Weights};
use super::tensor::Tensor;
use crate::graph::LinkGraph;
use crate::models::ValueTransform;
use crate::{Error, Mask, Result, TrafficDataset, TrafficWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskSampling {
    /// Each link known with probability 1/2, one random link forced unknown.
    Bernoulli,
    /// Number of known links uniform on `0..L`, then a uniform subset of that
    /// size; matches the known-set sizes met while coding a bin.
    UniformCount,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub w_past: usize,
    pub hidden_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Cosine decay target as a fraction of `learning_rate`; 1 keeps it flat.
    pub final_lr_fraction: f64,
    pub masks_per_window: usize,
    pub eval_masks_per_window: usize,
    pub mask_sampling: MaskSampling,
    pub split_fraction: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::NetworkStgnn,
            w_past: 5,
            hidden_size: 64,
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            final_lr_fraction: 1.0,
            masks_per_window: 8,
            eval_masks_per_window: 4,
            mask_sampling: MaskSampling::Bernoulli,
            split_fraction: 0.7,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad("split fraction must lie in (0, 1)");
        }
        if self.hidden_size == 0 || self.w_past == 0 {
            return bad("hidden size and window length must be positive");
        }
        if self.batch_size == 0 || self.masks_per_window == 0 || self.eval_masks_per_window == 0 {
            return bad("batch size and mask counts must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return bad("final learning-rate fraction must lie in (0, 1]");
        }
        if !(self.clip_norm.is_finite() && self.clip_norm >= 0.0) {
            return bad("clip norm must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub train_loss: f64,
    pub eval_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub train_windows: usize,
    pub eval_windows: usize,
    pub initial_eval_loss: f64,
    pub epochs: Vec<EpochStats>,
    /// Index into `epochs` of the kept checkpoint; `None` keeps the initial weights.
    pub best_epoch: Option<usize>,
}

impl TrainReport {
    pub fn best_eval_loss(&self) -> f64 {
        self.best_epoch
            .map_or(self.initial_eval_loss, |e| self.epochs[e].eval_loss)
    }
}

pub fn sample_mask<R: Rng>(links: usize, sampling: MaskSampling, rng: &mut R) -> Mask {
    match sampling {
        MaskSampling::Bernoulli => {
            let mut known: Vec<bool> = (0..links).map(|_| rng.gen_bool(0.5)).collect();
            known[rng.gen_range(0..links)] = false;
            Mask::from_known(known)
        }
        MaskSampling::UniformCount => {
            let count = rng.gen_range(0..links);
            let mut known = vec![false; links];
            for l in rand::seq::index::sample(rng, links, count) {
                known[l] = true;
            }
            Mask::from_known(known)
        }
    }
}

/// Mean and standard deviation of `ln(1 + v)`; a constant series gets std 1.
pub fn fit_transform(values: &[u32]) -> ValueTransform {
    if values.is_empty() {
        return ValueTransform::Log1p { mean: 0.0, std: 1.0 };
    }
    if values.iter().all(|&v| v == values[0]) {
        let mean = (values[0] as f64).ln_1p();
        return ValueTransform::Log1p { mean, std: 1.0 };
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| (v as f64).ln_1p()).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|&v| ((v as f64).ln_1p() - mean).powi(2))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    let std = if std > 1e-9 { std } else { 1.0 };
    ValueTransform::Log1p { mean, std }
}

fn epoch_learning_rate(config: &TrainConfig, epoch: usize) -> f64 {
    if config.epochs <= 1 {
        return config.learning_rate;
    }
    let progress = epoch as f64 / (config.epochs - 1) as f64;
    let floor = config.final_lr_fraction;
    let scale = floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
    config.learning_rate * scale
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(weights: &Weights, lr: f64) -> Self {
        let zeros = || weights.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
            lr,
        }
    }

    fn step(&mut self, weights: &mut Weights, grad: &Weights) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let grads = grad.tensors();
        for (i, w) in weights.tensors_mut().into_iter().enumerate() {
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], grads[i].data());
            for (j, p) in w.data_mut().iter_mut().enumerate() {
                m[j] = Self::BETA1 * m[j] + (1.0 - Self::BETA1) * g[j];
                v[j] = Self::BETA2 * v[j] + (1.0 - Self::BETA2) * g[j] * g[j];
                *p -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

fn scale_gradient(grad: &mut Weights, factor: f64, clip: f64) {
    let mut norm2 = 0.0;
    for t in grad.tensors_mut() {
        for g in t.data_mut() {
            *g *= factor;
            norm2 += *g * *g;
        }
    }
    let norm = norm2.sqrt();
    if clip > 0.0 && norm > clip {
        let s = clip / norm;
        for t in grad.tensors_mut() {
            t.data_mut().iter_mut().for_each(|g| *g *= s);
        }
    }
}

/// Windows `(label_bin, masks)` with fixed masks, for evaluation.
fn fixed_masks(
    labels: &[usize],
    links: usize,
    count: usize,
    sampling: MaskSampling,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<Mask>> {
    labels
        .iter()
        .map(|_| (0..count).map(|_| sample_mask(links, sampling, rng)).collect())
        .collect()
}

fn mean_loss(
    model: &PredictorModel,
    graph: &LinkGraph,
    dataset: &TrafficDataset,
    labels: &[usize],
    masks: &[Vec<Mask>],
) -> f64 {
    let w = model.w_past;
    let total: f64 = labels
        .iter()
        .zip(masks)
        .map(|(&t, m)| {
            let past = &dataset.values()[(t - w) * dataset.num_links()..t * dataset.num_links()];
            model.window_loss(graph, past, dataset.row(t), m, None)
        })
        .sum();
    total / labels.len() as f64
}

/// Trains a predictor on the windows of `dataset` and returns the weights
/// with the lowest evaluation loss.
pub fn train(dataset: &TrafficDataset, config: &TrainConfig) -> Result<PredictorModel> {
    Ok(train_with_report(dataset, config)?.0)
}

pub fn train_with_report(
    dataset: &TrafficDataset,
    config: &TrainConfig,
) -> Result<(PredictorModel, TrainReport)> {
    config.validate()?;
    let w = config.w_past;
    let windows = dataset.num_windows(w);
    if windows == 0 {
        return Err(Error::Dataset(format!(
            "{} bins cannot hold a window of {} past bins plus a label bin",
            dataset.num_bins(),
            w
        )));
    }
    let links = dataset.num_links();
    let n_train = ((windows as f64 * config.split_fraction).round() as usize).clamp(1, windows);
    let train_labels: Vec<usize> = (w..w + n_train).collect();
    let eval_labels: Vec<usize> = if n_train < windows {
        (w + n_train..w + windows).collect()
    } else {
        train_labels.clone()
    };

    let transform = fit_transform(&dataset.values()[..(w + n_train) * links]);
    let graph = match config.kind {
        ModelKind::NetworkStgnn => LinkGraph::new(dataset.topology()),
        ModelKind::SingleLinkRnn => LinkGraph::isolated(links),
    };

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = PredictorModel::new(config.kind, config.hidden_size, w, transform, &mut init_rng)?;
    let mut eval_rng = ChaCha8Rng::seed_from_u64(config.seed);
    eval_rng.set_stream(1);
    let eval_masks = fixed_masks(
        &eval_labels,
        links,
        config.eval_masks_per_window,
        config.mask_sampling,
        &mut eval_rng,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);

    let initial_eval_loss = mean_loss(&model, &graph, dataset, &eval_labels, &eval_masks);
    let mut best = (initial_eval_loss, model.weights.clone());
    let mut report = TrainReport {
        train_windows: train_labels.len(),
        eval_windows: eval_labels.len(),
        initial_eval_loss,
        epochs: Vec::with_capacity(config.epochs),
        best_epoch: None,
    };

    let mut adam = Adam::new(&model.weights, config.learning_rate);
    let mut order = train_labels.clone();
    let mut grad = model.weights.zeros_like();
    for epoch in 0..config.epochs {
        adam.lr = epoch_learning_rate(config, epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            for t in grad.tensors_mut() {
                t.fill(0.0);
            }
            for &t in batch {
                let masks: Vec<Mask> = match config.kind {
                    ModelKind::NetworkStgnn => (0..config.masks_per_window)
                        .map(|_| sample_mask(links, config.mask_sampling, &mut rng))
                        .collect(),
                    ModelKind::SingleLinkRnn => Vec::new(),
                };
                let past = &dataset.values()[(t - w) * links..t * links];
                epoch_loss += model.window_loss(&graph, past, dataset.row(t), &masks, Some(&mut grad));
            }
            scale_gradient(&mut grad, 1.0 / batch.len() as f64, config.clip_norm);
            adam.step(&mut model.weights, &grad);
        }
        if !model.weights.is_finite() {
            return Err(Error::Dataset(format!("training diverged in epoch {epoch}")));
        }
        let eval_loss = mean_loss(&model, &graph, dataset, &eval_labels, &eval_masks);
        report.epochs.push(EpochStats {
            train_loss: epoch_loss / order.len() as f64,
            eval_loss,
        });
        if eval_loss < best.0 {
            best = (eval_loss, model.weights.clone());
            report.best_epoch = Some(epoch);
        }
    }
    model.weights = best.1;
    Ok((model, report))
}

/// Largest relative deviation between `analytic[i]` and the central
/// difference of `f` at `theta` along coordinate `i`, over `indices`.
/// Denominators are floored at `1e-6` so that gradients which vanish
/// analytically are compared absolutely.
pub fn finite_difference_check<F>(
    theta: &[f64],
    analytic: &[f64],
    indices: &[usize],
    epsilon: f64,
    mut f: F,
) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = theta.to_vec();
    let mut worst = 0.0f64;
    for &i in indices {
        probe[i] = theta[i] + epsilon;
        let up = f(&probe);
        probe[i] = theta[i] - epsilon;
        let down = f(&probe);
        probe[i] = theta[i];
        let numeric = (up - down) / (2.0 * epsilon);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

pub(crate) fn flatten(tensors: &[&Tensor]) -> Vec<f64> {
    tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
}

pub(crate) fn unflatten(weights: &mut Weights, flat: &[f64]) {
    let mut offset = 0;
    for t in weights.tensors_mut() {
        let n = t.len();
        t.data_mut().copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
}

/// Compares reverse-mode gradients of the window loss (under the window's
/// own mask) against central differences over up to `samples` randomly
/// chosen weights; `samples = 0` checks every weight.
pub fn gradient_check(
    model: &PredictorModel,
    graph: &LinkGraph,
    window: &TrafficWindow,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    let masks = [window.mask.clone()];
    let mut grad = model.weights.zeros_like();
    model.window_loss(graph, &window.past, &window.label, &masks, Some(&mut grad));
    let theta = flatten(&model.weights.tensors());
    let analytic = flatten(&grad.tensors());
    let mut indices: Vec<usize> = (0..theta.len()).collect();
    if samples > 0 && samples < theta.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices = rand::seq::index::sample(&mut rng, theta.len(), samples).into_vec();
        indices.sort_unstable();
    }
    let mut probe = model.clone();
    finite_difference_check(&theta, &analytic, &indices, epsilon, |p| {
        unflatten(&mut probe.weights, p);
        probe.window_loss(graph, &window.past, &window.label, &masks, None)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::layers::Dense;
    use crate::Topology;

    fn toy_window(links: usize, w_past: usize, seed: u64) -> TrafficWindow {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut known: Vec<bool> = (0..links).map(|_| rng.gen_bool(0.5)).collect();
        known[0] = false;
        TrafficWindow {
            past: (0..w_past * links).map(|_| rng.gen_range(0..300)).collect(),
            label: (0..links).map(|_| rng.gen_range(0..300)).collect(),
            mask: Mask::from_known(known),
        }
    }

    fn toy_model(kind: ModelKind, hidden: usize, w_past: usize, seed: u64) -> PredictorModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = ValueTransform::Log1p { mean: 4.0, std: 1.3 };
        PredictorModel::new(kind, hidden, w_past, t, &mut rng).unwrap()
    }

    #[test]
    fn linear_map_gradients_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layer = Dense::init(3, 2, &mut rng);
        let x = [0.3, -1.2, 2.0];
        let c = [1.5, -0.7];
        let loss = |d: &Dense| {
            let mut y = [0.0; 2];
            d.forward(&x, &mut y);
            y[0] * c[0] + y[1] * c[1]
        };
        let mut grad = Dense::zeros(3, 2);
        layer.backward(&mut grad, &x, &c, None);
        let theta = flatten(&layer.tensors());
        let analytic = flatten(&grad.tensors());
        let all: Vec<usize> = (0..theta.len()).collect();
        let mut probe = layer.clone();
        let err = finite_difference_check(&theta, &analytic, &all, 1e-3, |p| {
            probe.weight.data_mut().copy_from_slice(&p[..6]);
            probe.bias.data_mut().copy_from_slice(&p[6..]);
            loss(&probe)
        });
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn stgnn_gradients_match_finite_differences() {
        let topo = Topology::new(3, vec![(0, 1), (1, 2), (2, 0)]).unwrap();
        let graph = LinkGraph::new(&topo);
        let model = toy_model(ModelKind::NetworkStgnn, 4, 3, 11);
        let window = toy_window(3, 3, 2);
        let err = gradient_check(&model, &graph, &window, 1e-6, 0, 0);
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn two_link_multi_mask_loss_gradient() {
        let topo = Topology::new(2, vec![(0, 1), (1, 0)]).unwrap();
        let graph = LinkGraph::new(&topo);
        let model = toy_model(ModelKind::NetworkStgnn, 3, 2, 5);
        let window = toy_window(2, 2, 9);
        let masks = [
            Mask::from_known(vec![true, false]),
            Mask::from_known(vec![false, false]),
            Mask::from_known(vec![false, true]),
        ];
        let mut grad = model.weights.zeros_like();
        model.window_loss(&graph, &window.past, &window.label, &masks, Some(&mut grad));
        let theta = flatten(&model.weights.tensors());
        let analytic = flatten(&grad.tensors());
        let all: Vec<usize> = (0..theta.len()).collect();
        let mut probe = model.clone();
        let err = finite_difference_check(&theta, &analytic, &all, 1e-6, |p| {
            unflatten(&mut probe.weights, p);
            probe.window_loss(&graph, &window.past, &window.label, &masks, None)
        });
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn rnn_gradients_match_finite_differences() {
        let graph = LinkGraph::isolated(3);
        let model = toy_model(ModelKind::SingleLinkRnn, 4, 4, 3);
        let window = toy_window(3, 4, 6);
        let err = gradient_check(&model, &graph, &window, 1e-6, 0, 0);
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn tiny_epsilon_hits_rounding_floor() {
        let topo = Topology::new(3, vec![(0, 1), (1, 2), (2, 0)]).unwrap();
        let graph = LinkGraph::new(&topo);
        let model = toy_model(ModelKind::NetworkStgnn, 4, 3, 11);
        let window = toy_window(3, 3, 2);
        let good = gradient_check(&model, &graph, &window, 1e-6, 60, 1);
        let tiny = gradient_check(&model, &graph, &window, 1e-13, 60, 1);
        assert!(tiny > 10.0 * good, "{tiny} vs {good}");
    }

    #[test]
    fn masks_are_well_formed() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for sampling in [MaskSampling::Bernoulli, MaskSampling::UniformCount] {
            for _ in 0..200 {
                let m = sample_mask(7, sampling, &mut rng);
                assert_eq!(m.len(), 7);
                assert!(m.count_unknown() >= 1);
            }
        }
    }

    #[test]
    fn transform_fit() {
        let t = fit_transform(&[5, 5, 5]);
        assert_eq!(t, ValueTransform::Log1p { mean: 6f64.ln(), std: 1.0 });
        assert_eq!(t.value(5), 0.0);
        if let ValueTransform::Log1p { mean, std } = fit_transform(&[0, 1, 3]) {
            let logs = [0.0, 2f64.ln(), 4f64.ln()];
            let m = logs.iter().sum::<f64>() / 3.0;
            assert!((mean - m).abs() < 1e-15);
            let v = logs.iter().map(|l| (l - m).powi(2)).sum::<f64>() / 3.0;
            assert!((std - v.sqrt()).abs() < 1e-15);
        } else {
            panic!("expected log transform");
        }
    }

    fn small_dataset(bins: usize, seed: u64) -> TrafficDataset {
        let topo = Topology::new(3, vec![(0, 1), (1, 2), (2, 0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..bins * 3).map(|_| rng.gen_range(10..60)).collect();
        TrafficDataset::new(topo, values, 300.0).unwrap()
    }

    #[test]
    fn seeded_training_is_deterministic() {
        let data = small_dataset(40, 1);
        let config = TrainConfig {
            hidden_size: 4,
            w_past: 3,
            epochs: 2,
            batch_size: 8,
            seed: 99,
            ..TrainConfig::default()
        };
        let a = train(&data, &config).unwrap();
        let b = train(&data, &config).unwrap();
        assert_eq!(a, b);
        let c = train(&data, &TrainConfig { seed: 100, ..config }).unwrap();
        assert_ne!(a.weights, c.weights);
    }

    #[test]
    fn constant_series_is_learned() {
        let topo = Topology::new(3, vec![(0, 1), (1, 2), (2, 0)]).unwrap();
        let data = TrafficDataset::new(topo, vec![37; 60 * 3], 300.0).unwrap();
        for kind in [ModelKind::SingleLinkRnn, ModelKind::NetworkStgnn] {
            let config = TrainConfig {
                kind,
                hidden_size: 6,
                w_past: 3,
                epochs: 150,
                batch_size: 8,
                learning_rate: 1e-2,
                seed: 5,
                ..TrainConfig::default()
            };
            let (model, report) = train_with_report(&data, &config).unwrap();
            assert!(report.best_eval_loss() < report.initial_eval_loss - 3.0, "{report:?}");
            let target = model.transform.value(37);
            assert_eq!(target, 0.0);
            let p = match kind {
                ModelKind::SingleLinkRnn => model.rnn_forward(&[37, 37, 37]).unwrap(),
                ModelKind::NetworkStgnn => {
                    let w = data.window(10, 3);
                    model.stgnn_forward(&w, &LinkGraph::new(data.topology())).unwrap()[1]
                }
            };
            assert!((p.mu - target).abs() < 0.05, "{kind:?} mu {}", p.mu);
            assert!(p.b < 0.05, "{kind:?} b {}", p.b);
        }
    }

    #[test]
    fn rejects_short_datasets_and_bad_configs() {
        let data = small_dataset(3, 0);
        let config = TrainConfig {
            w_past: 3,
            ..TrainConfig::default()
        };
        assert!(train(&data, &config).is_err());
        let bad = TrainConfig {
            split_fraction: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
