//! The per-link recurrent predictor and its graph variant.
//!
//! For every bin of a window, each link's features `[T(v), known]` go through
//! a two-layer embedding MLP. In the graph variant, every link then emits a
//! message `tanh(W_m [e; h] + b_m)` built from its embedding and its previous
//! hidden state; a link sums the messages of its line-graph neighbours in
//! ascending id order and feeds `[e; Σ m]` to the GRU. The single-link
//! variant feeds `e` alone. After the last bin a readout MLP maps each hidden
//! state to Laplace parameters `(mu, softplus(·) + B_MIN)`.

use rand::Rng;

use super::layers::{tanh_backward, Dense, GruCache, GruCell};
use super::tensor::{softplus, sigmoid, Tensor};
use crate::graph::LinkGraph;
use crate::models::{DistParams, ValueTransform, B_MIN};
use crate::{Error, Mask, Result, TrafficWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    SingleLinkRnn,
    NetworkStgnn,
}

impl ModelKind {
    pub fn tag(self) -> u8 {
        match self {
            Self::SingleLinkRnn => 0,
            Self::NetworkStgnn => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Self::SingleLinkRnn),
            1 => Some(Self::NetworkStgnn),
            _ => None,
        }
    }
}

const FEATURES: usize = 2;

/// Shrinks the initial message weights so that the sum over a node's
/// neighbours starts small next to the link's own embedding.
const MESSAGE_INIT_SCALE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub embed_in: Dense,
    pub embed_out: Dense,
    pub message: Option<Dense>,
    pub gru: GruCell,
    pub readout_hidden: Dense,
    pub readout_out: Dense,
}

impl Weights {
    pub fn zeros(kind: ModelKind, hidden: usize) -> Self {
        let (message, gru_in) = match kind {
            ModelKind::SingleLinkRnn => (None, hidden),
            ModelKind::NetworkStgnn => (Some(Dense::zeros(2 * hidden, hidden)), 2 * hidden),
        };
        Self {
            embed_in: Dense::zeros(FEATURES, hidden),
            embed_out: Dense::zeros(hidden, hidden),
            message,
            gru: GruCell::zeros(gru_in, hidden),
            readout_hidden: Dense::zeros(hidden, hidden),
            readout_out: Dense::zeros(hidden, 2),
        }
    }

    pub fn init<R: Rng>(kind: ModelKind, hidden: usize, rng: &mut R) -> Self {
        let embed_in = Dense::init(FEATURES, hidden, rng);
        let embed_out = Dense::init(hidden, hidden, rng);
        let (message, gru_in) = match kind {
            ModelKind::SingleLinkRnn => (None, hidden),
            ModelKind::NetworkStgnn => {
                let mut m = Dense::init(2 * hidden, hidden, rng);
                m.weight.data_mut().iter_mut().for_each(|w| *w *= MESSAGE_INIT_SCALE);
                (Some(m), 2 * hidden)
            }
        };
        let gru = GruCell::init(gru_in, hidden, rng);
        let readout_hidden = Dense::init(hidden, hidden, rng);
        let readout_out = Dense::init(hidden, 2, rng);
        Self {
            embed_in,
            embed_out,
            message,
            gru,
            readout_hidden,
            readout_out,
        }
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Fixed traversal order shared by the optimizer, serialization and
    /// gradient checks.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::with_capacity(14);
        out.extend(self.embed_in.tensors());
        out.extend(self.embed_out.tensors());
        if let Some(m) = &self.message {
            out.extend(m.tensors());
        }
        out.extend(self.gru.tensors());
        out.extend(self.readout_hidden.tensors());
        out.extend(self.readout_out.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::with_capacity(14);
        out.extend(self.embed_in.tensors_mut());
        out.extend(self.embed_out.tensors_mut());
        if let Some(m) = &mut self.message {
            out.extend(m.tensors_mut());
        }
        out.extend(self.gru.tensors_mut());
        out.extend(self.readout_hidden.tensors_mut());
        out.extend(self.readout_out.tensors_mut());
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

/// Weights plus the value transform and window geometry they were trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub kind: ModelKind,
    pub hidden: usize,
    pub w_past: usize,
    pub transform: ValueTransform,
    pub weights: Weights,
}

impl PredictorModel {
    pub fn new<R: Rng>(
        kind: ModelKind,
        hidden: usize,
        w_past: usize,
        transform: ValueTransform,
        rng: &mut R,
    ) -> Result<Self> {
        Self::validate_geometry(hidden, w_past, &transform)?;
        Ok(Self {
            kind,
            hidden,
            w_past,
            transform,
            weights: Weights::init(kind, hidden, rng),
        })
    }

    pub fn zeros(kind: ModelKind, hidden: usize, w_past: usize, transform: ValueTransform) -> Result<Self> {
        Self::validate_geometry(hidden, w_past, &transform)?;
        Ok(Self {
            kind,
            hidden,
            w_past,
            transform,
            weights: Weights::zeros(kind, hidden),
        })
    }

    fn validate_geometry(hidden: usize, w_past: usize, transform: &ValueTransform) -> Result<()> {
        if hidden == 0 || w_past == 0 {
            return Err(Error::InvalidArgument(
                "hidden size and window length must be positive".into(),
            ));
        }
        if let ValueTransform::Log1p { mean, std } = *transform {
            if !(mean.is_finite() && std.is_finite() && std > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "transform statistics mean={mean} std={std}"
                )));
            }
        }
        Ok(())
    }

    fn gru_inputs(&self) -> usize {
        match self.kind {
            ModelKind::SingleLinkRnn => self.hidden,
            ModelKind::NetworkStgnn => 2 * self.hidden,
        }
    }

    fn known_features(&self, v: u32) -> [f64; FEATURES] {
        [self.transform.value(v), 1.0]
    }

    /// Embedding of one link's features: `tanh(W2 tanh(W1 x + b1) + b2)`.
    fn embed(&self, x: &[f64; FEATURES], e1: &mut [f64], e: &mut [f64]) {
        self.weights.embed_in.forward_tanh(x, e1);
        self.weights.embed_out.forward_tanh(e1, e);
    }

    fn message(&self, e: &[f64], h_prev: &[f64], out: &mut [f64]) {
        let msg = self
            .weights
            .message
            .as_ref()
            .expect("graph model has a message layer");
        let mut input = Vec::with_capacity(2 * self.hidden);
        input.extend_from_slice(e);
        input.extend_from_slice(h_prev);
        msg.forward_tanh(&input, out);
    }

    /// GRU input for `link`: `[e; Σ_{n ∈ N(link)} m_n]` or just `e`.
    fn gru_input(&self, graph: &LinkGraph, link: usize, e: &[f64], messages: &[f64], out: &mut [f64]) {
        let h = self.hidden;
        out[..h].copy_from_slice(&e[link * h..(link + 1) * h]);
        if self.kind == ModelKind::NetworkStgnn {
            let agg = &mut out[h..2 * h];
            agg.fill(0.0);
            for &n in graph.neighbors(link) {
                for (a, m) in agg.iter_mut().zip(&messages[n * h..(n + 1) * h]) {
                    *a += m;
                }
            }
        }
    }

    fn readout(&self, h: &[f64]) -> DistParams {
        let mut hidden = vec![0.0; self.hidden];
        let mut out = [0.0; 2];
        self.weights.readout_hidden.forward_tanh(h, &mut hidden);
        self.weights.readout_out.forward(&hidden, &mut out);
        DistParams {
            mu: out[0],
            b: softplus(out[1]) + B_MIN,
        }
    }

    /// One bin for all links. `cache` selects whether backward state is kept.
    fn step(&self, graph: &LinkGraph, x: &[[f64; FEATURES]], h_prev: &[f64], cache: bool) -> StepCache {
        let links = x.len();
        let h = self.hidden;
        let inputs = self.gru_inputs();
        let mut c = StepCache {
            x: x.to_vec(),
            e1: vec![0.0; links * h],
            e: vec![0.0; links * h],
            m: Vec::new(),
            u: vec![0.0; links * inputs],
            h_prev: h_prev.to_vec(),
            gru: Vec::new(),
            h: vec![0.0; links * h],
        };
        for l in 0..links {
            let (e1, e) = (&mut c.e1[l * h..(l + 1) * h], &mut c.e[l * h..(l + 1) * h]);
            self.embed(&x[l], e1, e);
        }
        if self.kind == ModelKind::NetworkStgnn {
            c.m = vec![0.0; links * h];
            for l in 0..links {
                self.message(
                    &c.e[l * h..(l + 1) * h],
                    &h_prev[l * h..(l + 1) * h],
                    &mut c.m[l * h..(l + 1) * h],
                );
            }
        }
        if cache {
            c.gru = vec![GruCache::default(); links];
        }
        for l in 0..links {
            let u = &mut c.u[l * inputs..(l + 1) * inputs];
            self.gru_input(graph, l, &c.e, &c.m, u);
            let gc = if cache { Some(&mut c.gru[l]) } else { None };
            self.weights
                .gru
                .step(u, &h_prev[l * h..(l + 1) * h], &mut c.h[l * h..(l + 1) * h], gc);
        }
        c
    }

    /// Backpropagates `dh = ∂L/∂h` of one cached step; returns `∂L/∂h_prev`.
    fn step_backward(&self, graph: &LinkGraph, c: &StepCache, dh: &[f64], grad: &mut Weights) -> Vec<f64> {
        let links = c.x.len();
        let h = self.hidden;
        let inputs = self.gru_inputs();
        let mut dh_prev = vec![0.0; links * h];
        let mut du = vec![0.0; links * inputs];
        for l in 0..links {
            let dhl = &dh[l * h..(l + 1) * h];
            if dhl.iter().all(|&g| g == 0.0) {
                continue;
            }
            self.weights.gru.backward(
                &mut grad.gru,
                &c.gru[l],
                &c.u[l * inputs..(l + 1) * inputs],
                &c.h_prev[l * h..(l + 1) * h],
                dhl,
                Some(&mut du[l * inputs..(l + 1) * inputs]),
                &mut dh_prev[l * h..(l + 1) * h],
            );
        }
        let mut de = vec![0.0; links * h];
        for l in 0..links {
            de[l * h..(l + 1) * h].copy_from_slice(&du[l * inputs..l * inputs + h]);
        }
        if self.kind == ModelKind::NetworkStgnn {
            let msg = self.weights.message.as_ref().expect("message layer");
            let gmsg = grad.message.as_mut().expect("message gradient");
            let mut input = vec![0.0; 2 * h];
            let mut d_input = vec![0.0; 2 * h];
            for n in 0..links {
                // messages of n reach every l with n ∈ N(l), i.e. l ∈ N(n)
                let mut dm = vec![0.0; h];
                for &l in graph.neighbors(n) {
                    for (d, g) in dm.iter_mut().zip(&du[l * inputs + h..(l + 1) * inputs]) {
                        *d += g;
                    }
                }
                if dm.iter().all(|&g| g == 0.0) {
                    continue;
                }
                tanh_backward(&c.m[n * h..(n + 1) * h], &mut dm);
                input[..h].copy_from_slice(&c.e[n * h..(n + 1) * h]);
                input[h..].copy_from_slice(&c.h_prev[n * h..(n + 1) * h]);
                d_input.fill(0.0);
                msg.backward(gmsg, &input, &dm, Some(&mut d_input));
                for j in 0..h {
                    de[n * h + j] += d_input[j];
                    dh_prev[n * h + j] += d_input[h + j];
                }
            }
        }
        let mut de1 = vec![0.0; h];
        for l in 0..links {
            let del = &mut de[l * h..(l + 1) * h];
            if del.iter().all(|&g| g == 0.0) {
                continue;
            }
            tanh_backward(&c.e[l * h..(l + 1) * h], del);
            de1.fill(0.0);
            self.weights.embed_out.backward(
                &mut grad.embed_out,
                &c.e1[l * h..(l + 1) * h],
                del,
                Some(&mut de1),
            );
            tanh_backward(&c.e1[l * h..(l + 1) * h], &mut de1);
            self.weights
                .embed_in
                .backward(&mut grad.embed_in, &c.x[l], &de1, None);
        }
        dh_prev
    }

    /// Hidden states after the fully known past bins (`past` is `w × L`).
    fn run_past(&self, graph: &LinkGraph, past: &[u32], links: usize) -> Vec<f64> {
        let mut state = vec![0.0; links * self.hidden];
        for row in past.chunks_exact(links) {
            let x: Vec<[f64; FEATURES]> = row.iter().map(|&v| self.known_features(v)).collect();
            state = self.step(graph, &x, &state, false).h;
        }
        state
    }

    fn label_features(&self, label: &[u32], mask: &Mask) -> Vec<[f64; FEATURES]> {
        label
            .iter()
            .zip(mask.known())
            .map(|(&v, &known)| if known { self.known_features(v) } else { [0.0; FEATURES] })
            .collect()
    }

    fn check_window(&self, window: &TrafficWindow, graph: &LinkGraph) -> Result<()> {
        let links = window.num_links();
        if graph.num_links() != links || window.mask.len() != links {
            return Err(Error::InvalidArgument(format!(
                "window has {links} links, graph {}, mask {}",
                graph.num_links(),
                window.mask.len()
            )));
        }
        if window.past.len() != self.w_past * links {
            return Err(Error::InvalidArgument(format!(
                "window has {} past values, expected {} bins of {links} links",
                window.past.len(),
                self.w_past
            )));
        }
        Ok(())
    }

    /// Distribution parameters of every link's label value, conditioned on the
    /// past bins and on the label values the mask marks as known.
    pub fn stgnn_forward(&self, window: &TrafficWindow, graph: &LinkGraph) -> Result<Vec<DistParams>> {
        if self.kind != ModelKind::NetworkStgnn {
            return Err(Error::InvalidArgument("not a graph model".into()));
        }
        self.check_window(window, graph)?;
        let links = window.num_links();
        let state = self.run_past(graph, &window.past, links);
        let x = self.label_features(&window.label, &window.mask);
        let last = self.step(graph, &x, &state, false);
        Ok(last
            .h
            .chunks_exact(self.hidden)
            .map(|h| self.readout(h))
            .collect())
    }

    /// Single-link prediction from the previous `w_past` values.
    pub fn rnn_forward(&self, past: &[u32]) -> Result<DistParams> {
        Ok(self.rnn_forward_links(past, 1)?[0])
    }

    /// Independent single-link predictions for `links` series laid out
    /// row-major as `w_past × links`.
    pub fn rnn_forward_links(&self, past: &[u32], links: usize) -> Result<Vec<DistParams>> {
        if self.kind != ModelKind::SingleLinkRnn {
            return Err(Error::InvalidArgument("not a single-link model".into()));
        }
        if links == 0 || past.len() != self.w_past * links {
            return Err(Error::InvalidArgument(format!(
                "expected {} past values, got {}",
                self.w_past * links,
                past.len()
            )));
        }
        let graph = LinkGraph::isolated(links);
        let state = self.run_past(&graph, past, links);
        Ok(state.chunks_exact(self.hidden).map(|h| self.readout(h)).collect())
    }

    /// Mean Laplace NLL of one window, averaged over `masks` (graph model) or
    /// over all links (single-link model). When `grad` is given, the gradient
    /// of that mean is added into it.
    pub fn window_loss(
        &self,
        graph: &LinkGraph,
        past: &[u32],
        label: &[u32],
        masks: &[Mask],
        mut grad: Option<&mut Weights>,
    ) -> f64 {
        let links = label.len();
        let h = self.hidden;
        let need_grad = grad.is_some();
        let mut caches = Vec::with_capacity(self.w_past);
        let mut state = vec![0.0; links * h];
        for row in past.chunks_exact(links) {
            let x: Vec<[f64; FEATURES]> = row.iter().map(|&v| self.known_features(v)).collect();
            let c = self.step(graph, &x, &state, need_grad);
            state = c.h.clone();
            caches.push(c);
        }
        let targets: Vec<f64> = label.iter().map(|&v| self.transform.value(v)).collect();

        let mut total = 0.0;
        let mut d_state = vec![0.0; links * h];
        match self.kind {
            ModelKind::SingleLinkRnn => {
                let scale = 1.0 / links as f64;
                for l in 0..links {
                    let hl = &state[l * h..(l + 1) * h];
                    let dh = grad.is_some().then(|| &mut d_state[l * h..(l + 1) * h]);
                    total += scale * self.readout_loss(hl, targets[l], scale, grad.as_deref_mut(), dh);
                }
            }
            ModelKind::NetworkStgnn => {
                let mask_scale = 1.0 / masks.len() as f64;
                for mask in masks {
                    let unknown: Vec<usize> = (0..links).filter(|&l| !mask.is_known(l)).collect();
                    if unknown.is_empty() {
                        continue;
                    }
                    let scale = mask_scale / unknown.len() as f64;
                    let x = self.label_features(label, mask);
                    let c = self.step(graph, &x, &state, need_grad);
                    let mut dh_last = vec![0.0; links * h];
                    for &l in &unknown {
                        let hl = &c.h[l * h..(l + 1) * h];
                        let dh = grad.is_some().then(|| &mut dh_last[l * h..(l + 1) * h]);
                        total += scale * self.readout_loss(hl, targets[l], scale, grad.as_deref_mut(), dh);
                    }
                    if let Some(g) = grad.as_deref_mut() {
                        let back = self.step_backward(graph, &c, &dh_last, g);
                        for (d, b) in d_state.iter_mut().zip(&back) {
                            *d += b;
                        }
                    }
                }
            }
        }
        if let Some(g) = grad {
            for c in caches.iter().rev() {
                d_state = self.step_backward(graph, c, &d_state, g);
            }
        }
        total
    }

    /// NLL of `target` under the readout of `h`; adds `scale · ∂NLL` into the
    /// weight gradient and into `dh`.
    fn readout_loss(&self, h: &[f64], target: f64, scale: f64, grad: Option<&mut Weights>, dh: Option<&mut [f64]>) -> f64 {
        let hs = self.hidden;
        let mut hidden = vec![0.0; hs];
        let mut out = [0.0; 2];
        self.weights.readout_hidden.forward_tanh(h, &mut hidden);
        self.weights.readout_out.forward(&hidden, &mut out);
        let params = DistParams {
            mu: out[0],
            b: softplus(out[1]) + B_MIN,
        };
        let nll = laplace_nll(params, target);
        if let (Some(g), Some(dh)) = (grad, dh) {
            let (d_mu, d_b) = laplace_nll_grad(params, target);
            let d_out = [scale * d_mu, scale * d_b * sigmoid(out[1])];
            let mut d_hidden = vec![0.0; hs];
            self.weights
                .readout_out
                .backward(&mut g.readout_out, &hidden, &d_out, Some(&mut d_hidden));
            tanh_backward(&hidden, &mut d_hidden);
            self.weights
                .readout_hidden
                .backward(&mut g.readout_hidden, h, &d_hidden, Some(dh));
        }
        nll
    }
}

#[derive(Debug, Clone)]
struct StepCache {
    x: Vec<[f64; FEATURES]>,
    e1: Vec<f64>,
    e: Vec<f64>,
    m: Vec<f64>,
    u: Vec<f64>,
    h_prev: Vec<f64>,
    gru: Vec<GruCache>,
    h: Vec<f64>,
}

/// `ln(2b) + |x − mu| / b`.
pub fn laplace_nll(params: DistParams, x: f64) -> f64 {
    (2.0 * params.b).ln() + (x - params.mu).abs() / params.b
}

/// `(∂/∂mu, ∂/∂b)` of [`laplace_nll`]; the subgradient at `x = mu` is 0.
pub fn laplace_nll_grad(params: DistParams, x: f64) -> (f64, f64) {
    let DistParams { mu, b } = params;
    let d_mu = if x > mu {
        -1.0 / b
    } else if x < mu {
        1.0 / b
    } else {
        0.0
    };
    (d_mu, 1.0 / b - (x - mu).abs() / (b * b))
}

/// Incremental graph inference for the bin being coded. Past bins are run
/// once; revealing a link's value recomputes only that link and its
/// neighbours, with results bit-identical to [`PredictorModel::stgnn_forward`]
/// on the same mask.
pub struct BinPredictor<'a> {
    model: &'a PredictorModel,
    graph: &'a LinkGraph,
    state: Vec<f64>,
    features: Vec<[f64; FEATURES]>,
    e: Vec<f64>,
    m: Vec<f64>,
    params: Vec<DistParams>,
    mask: Mask,
}

impl<'a> BinPredictor<'a> {
    pub fn new(model: &'a PredictorModel, graph: &'a LinkGraph, past: &[u32]) -> Result<Self> {
        if model.kind != ModelKind::NetworkStgnn {
            return Err(Error::InvalidArgument("not a graph model".into()));
        }
        let links = graph.num_links();
        if past.len() != model.w_past * links {
            return Err(Error::InvalidArgument(format!(
                "expected {} past values, got {}",
                model.w_past * links,
                past.len()
            )));
        }
        let state = model.run_past(graph, past, links);
        let features = vec![[0.0; FEATURES]; links];
        let c = model.step(graph, &features, &state, false);
        let params = c.h.chunks_exact(model.hidden).map(|h| model.readout(h)).collect();
        Ok(Self {
            model,
            graph,
            state,
            features,
            e: c.e,
            m: c.m,
            params,
            mask: Mask::unknown(links),
        })
    }

    pub fn params(&self) -> &[DistParams] {
        &self.params
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    /// Marks `link` as known with `value` and refreshes affected predictions.
    pub fn reveal(&mut self, link: usize, value: u32) {
        let model = self.model;
        let h = model.hidden;
        self.mask.set_known(link);
        self.features[link] = model.known_features(value);
        let mut e1 = vec![0.0; h];
        model.embed(&self.features[link], &mut e1, &mut self.e[link * h..(link + 1) * h]);
        model.message(
            &self.e[link * h..(link + 1) * h],
            &self.state[link * h..(link + 1) * h],
            &mut self.m[link * h..(link + 1) * h],
        );
        let mut u = vec![0.0; model.gru_inputs()];
        let mut out = vec![0.0; h];
        let affected = std::iter::once(link).chain(self.graph.neighbors(link).iter().copied());
        for l in affected {
            model.gru_input(self.graph, l, &self.e, &self.m, &mut u);
            model
                .weights
                .gru
                .step(&u, &self.state[l * h..(l + 1) * h], &mut out, None);
            self.params[l] = model.readout(&out);
        }
    }
}
