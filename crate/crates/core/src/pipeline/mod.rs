//! Compression and decompression of whole datasets or bin-by-bin streams.
//!
//! Every link gets its own coded stream. Bins are coded in time order; within
//! a bin the network-wide predictor picks the next link by smallest predicted
//! scale and re-predicts after every coded value, while all other methods
//! code links in index order. Encoder and decoder share [`Engine::code_bin`],
//! so both sides see identical model inputs by construction.

mod container;

use std::time::{Duration, Instant};

pub use container::{CompressedContainer, CONTAINER_MAGIC, CONTAINER_VERSION};

use crate::coder::{Decoder, Encoder};
use crate::graph::LinkGraph;
use crate::models::{
    quantized_laplace, static_histogram_model, uniform_model, DistParams, HistogramModel,
    QuantizedDistribution, SymbolAlphabet,
};
use crate::neural::{model_hash, BinPredictor, ModelKind, PredictorModel};
use crate::{Error, Mask, Result, Topology, TrafficDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Uniform,
    StaticAc,
    AdaptiveAc,
    Rnn,
    Stgnn,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Uniform,
        Method::StaticAc,
        Method::AdaptiveAc,
        Method::Rnn,
        Method::Stgnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::StaticAc => "static_ac",
            Self::AdaptiveAc => "adaptive_ac",
            Self::Rnn => "rnn",
            Self::Stgnn => "stgnn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn is_neural(self) -> bool {
        matches!(self, Self::Rnn | Self::Stgnn)
    }

    pub(crate) fn tag(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(usize::from(tag)).copied()
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Every link coded on its own history.
    SingleLink,
    /// Links of a bin coded jointly, conditioning on each other.
    NetworkWide,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Self::SingleLink => "single",
            Self::NetworkWide => "network",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "single" => Some(Self::SingleLink),
            "network" => Some(Self::NetworkWide),
            _ => None,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Self::SingleLink => 0,
            Self::NetworkWide => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Self::SingleLink),
            1 => Some(Self::NetworkWide),
            _ => None,
        }
    }
}

pub const DEFAULT_ADAPTIVE_WINDOW: usize = 5;

/// What to compress with. Baselines choose their histogram pooling through
/// `mode`; neural methods take it from the model kind.
#[derive(Debug, Clone, Copy)]
pub struct CodecSpec<'a> {
    pub method: Method,
    pub mode: Mode,
    pub model: Option<&'a PredictorModel>,
    pub adaptive_window: usize,
}

impl<'a> CodecSpec<'a> {
    pub fn uniform() -> Self {
        Self {
            method: Method::Uniform,
            mode: Mode::SingleLink,
            model: None,
            adaptive_window: 0,
        }
    }

    pub fn static_ac(mode: Mode) -> Self {
        Self {
            method: Method::StaticAc,
            mode,
            ..Self::uniform()
        }
    }

    pub fn adaptive_ac(mode: Mode, window: usize) -> Self {
        Self {
            method: Method::AdaptiveAc,
            mode,
            adaptive_window: window,
            ..Self::uniform()
        }
    }

    pub fn neural(model: &'a PredictorModel) -> Self {
        let (method, mode) = match model.kind {
            ModelKind::SingleLinkRnn => (Method::Rnn, Mode::SingleLink),
            ModelKind::NetworkStgnn => (Method::Stgnn, Mode::NetworkWide),
        };
        Self {
            method,
            mode,
            model: Some(model),
            adaptive_window: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        match (self.method, self.model) {
            (Method::Rnn | Method::Stgnn, None) => {
                return bad(format!("{} needs a trained model", self.method))
            }
            (Method::Rnn | Method::Stgnn, Some(m)) => {
                let expected = CodecSpec::neural(m);
                if expected.method != self.method || expected.mode != self.mode {
                    return Err(Error::ModelMismatch(format!(
                        "{:?} model cannot run {} in {} mode",
                        m.kind,
                        self.method,
                        self.mode.name()
                    )));
                }
            }
            (_, Some(_)) => return bad(format!("{} takes no model", self.method)),
            (Method::AdaptiveAc, None) if self.adaptive_window == 0 => {
                return bad("adaptive window must be positive".into())
            }
            _ => {}
        }
        Ok(())
    }

    fn context_bins(&self) -> usize {
        match self.method {
            Method::Uniform | Method::StaticAc => 0,
            Method::AdaptiveAc => self.adaptive_window,
            Method::Rnn | Method::Stgnn => self.model.map_or(0, |m| m.w_past),
        }
    }
}

/// Among unknown links, the one with the smallest predicted scale; ties go
/// to the lowest link id.
///
/// # Panics
/// If every link is already known.
pub fn select_next_link(predictions: &[DistParams], mask: &Mask) -> usize {
    let mut best: Option<usize> = None;
    for (l, p) in predictions.iter().enumerate() {
        if mask.is_known(l) {
            continue;
        }
        if best.map_or(true, |b| p.b < predictions[b].b) {
            best = Some(l);
        }
    }
    best.expect("select_next_link called with every link known")
}

/// One coded symbol as seen by the predictor, for encoder/decoder diffing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub bin: usize,
    pub link: usize,
    /// Laplace parameters for neural methods after bootstrap.
    pub params: Option<DistParams>,
}

trait SymbolIo {
    fn code(&mut self, link: usize, model: &QuantizedDistribution) -> Result<u32>;
}

struct EncodeIo<'b> {
    encoders: &'b mut [Encoder],
    row: &'b [u32],
}

impl SymbolIo for EncodeIo<'_> {
    fn code(&mut self, link: usize, model: &QuantizedDistribution) -> Result<u32> {
        let v = self.row[link];
        self.encoders[link].encode_symbol(model, v);
        Ok(v)
    }
}

struct DecodeIo<'b, 'c> {
    decoders: &'b mut [Decoder<'c>],
}

impl SymbolIo for DecodeIo<'_, '_> {
    fn code(&mut self, link: usize, model: &QuantizedDistribution) -> Result<u32> {
        self.decoders[link].decode_symbol(model)
    }
}

enum Engine<'a> {
    Uniform,
    Static(Vec<QuantizedDistribution>),
    Adaptive { pooled: bool },
    Rnn(&'a PredictorModel),
    Stgnn(&'a PredictorModel, LinkGraph),
}

struct Coding<'a> {
    engine: Engine<'a>,
    alphabet: SymbolAlphabet,
    uniform: QuantizedDistribution,
    links: usize,
    context: usize,
    /// The last `≤ context` bins, row-major.
    history: Vec<u32>,
    bins: usize,
    trace: Option<Vec<TraceEntry>>,
}

impl<'a> Coding<'a> {
    fn new(
        spec: &CodecSpec<'a>,
        topology: &Topology,
        v_max: u32,
        tables: &[Vec<(u32, u64)>],
    ) -> Result<Self> {
        spec.validate()?;
        let links = topology.num_links();
        let alphabet = SymbolAlphabet::new(v_max);
        let engine = match spec.method {
            Method::Uniform => Engine::Uniform,
            Method::StaticAc => {
                let expected = match spec.mode {
                    Mode::SingleLink => links,
                    Mode::NetworkWide => 1,
                };
                if tables.len() != expected {
                    return Err(Error::InvalidArgument(format!(
                        "static AC in {} mode needs {expected} histogram tables, got {}",
                        spec.mode.name(),
                        tables.len()
                    )));
                }
                let models = tables
                    .iter()
                    .map(|t| {
                        HistogramModel::from_counts(alphabet, t.clone())
                            .map(QuantizedDistribution::Histogram)
                    })
                    .collect::<Result<_>>()?;
                Engine::Static(models)
            }
            Method::AdaptiveAc => Engine::Adaptive {
                pooled: spec.mode == Mode::NetworkWide,
            },
            Method::Rnn => Engine::Rnn(spec.model.expect("validated")),
            Method::Stgnn => Engine::Stgnn(spec.model.expect("validated"), LinkGraph::new(topology)),
        };
        Ok(Self {
            engine,
            alphabet,
            uniform: uniform_model(alphabet),
            links,
            context: spec.context_bins(),
            history: Vec::new(),
            bins: 0,
            trace: None,
        })
    }

    fn record(&mut self, link: usize, params: Option<DistParams>) {
        if let Some(trace) = &mut self.trace {
            trace.push(TraceEntry {
                bin: self.bins,
                link,
                params,
            });
        }
    }

    fn code_bin<S: SymbolIo>(&mut self, io: &mut S) -> Result<Vec<u32>> {
        let links = self.links;
        let mut row = vec![0u32; links];
        let warm = self.bins >= self.context;
        match &self.engine {
            Engine::Uniform => {
                for (l, slot) in row.iter_mut().enumerate() {
                    *slot = io.code(l, &self.uniform)?;
                }
                (0..links).for_each(|l| self.record(l, None));
            }
            Engine::Static(models) => {
                for (l, slot) in row.iter_mut().enumerate() {
                    let m = if models.len() == 1 { &models[0] } else { &models[l] };
                    *slot = io.code(l, m)?;
                }
                (0..links).for_each(|l| self.record(l, None));
            }
            Engine::Adaptive { pooled } => {
                if *pooled {
                    let m = static_histogram_model(self.alphabet, self.history.iter().copied())?;
                    for (l, slot) in row.iter_mut().enumerate() {
                        *slot = io.code(l, &m)?;
                    }
                } else {
                    for (l, slot) in row.iter_mut().enumerate() {
                        let column = self.history.iter().skip(l).step_by(links).copied();
                        let m = static_histogram_model(self.alphabet, column)?;
                        *slot = io.code(l, &m)?;
                    }
                }
                (0..links).for_each(|l| self.record(l, None));
            }
            Engine::Rnn(model) if warm => {
                let model = *model;
                let params = model.rnn_forward_links(&self.history, links)?;
                for (l, slot) in row.iter_mut().enumerate() {
                    let q = quantized_laplace(params[l], self.alphabet, model.transform)?;
                    *slot = io.code(l, &q)?;
                }
                for (l, p) in params.into_iter().enumerate() {
                    self.record(l, Some(p));
                }
            }
            Engine::Stgnn(model, graph) if warm => {
                let model = *model;
                let mut predictor = BinPredictor::new(model, graph, &self.history)?;
                let mut order = Vec::with_capacity(links);
                for _ in 0..links {
                    let l = select_next_link(predictor.params(), predictor.mask());
                    let p = predictor.params()[l];
                    let q = quantized_laplace(p, self.alphabet, model.transform)?;
                    row[l] = io.code(l, &q)?;
                    predictor.reveal(l, row[l]);
                    order.push((l, p));
                }
                for (l, p) in order {
                    self.record(l, Some(p));
                }
            }
            Engine::Rnn(_) | Engine::Stgnn(..) => {
                for (l, slot) in row.iter_mut().enumerate() {
                    *slot = io.code(l, &self.uniform)?;
                }
                (0..links).for_each(|l| self.record(l, None));
            }
        }
        self.bins += 1;
        if self.context > 0 {
            self.history.extend_from_slice(&row);
            let excess = self.history.len().saturating_sub(self.context * links);
            self.history.drain(..excess);
        }
        Ok(row)
    }
}

/// Bin-at-a-time compressor. Output bytes become final as soon as the coder
/// emits them; [`CompressSession::finish`] flushes the streams and builds the
/// container.
pub struct CompressSession<'a> {
    spec: CodecSpec<'a>,
    coding: Coding<'a>,
    topology: Topology,
    v_max: u32,
    bin_duration_s: f64,
    tables: Vec<Vec<(u32, u64)>>,
    encoders: Vec<Encoder>,
    latencies: Vec<Duration>,
}

impl<'a> CompressSession<'a> {
    /// Opens a session for any method except static AC, whose tables must
    /// be known up front (see [`CompressSession::with_histograms`]).
    pub fn new(spec: &CodecSpec<'a>, topology: Topology, v_max: u32, bin_duration_s: f64) -> Result<Self> {
        Self::with_histograms(spec, topology, v_max, bin_duration_s, Vec::new())
    }

    pub fn with_histograms(
        spec: &CodecSpec<'a>,
        topology: Topology,
        v_max: u32,
        bin_duration_s: f64,
        tables: Vec<Vec<(u32, u64)>>,
    ) -> Result<Self> {
        if !(bin_duration_s.is_finite() && bin_duration_s > 0.0) {
            return Err(Error::InvalidArgument(format!("bin duration {bin_duration_s}")));
        }
        let coding = Coding::new(spec, &topology, v_max, &tables)?;
        let links = topology.num_links();
        Ok(Self {
            spec: *spec,
            coding,
            topology,
            v_max,
            bin_duration_s,
            tables,
            encoders: vec![Encoder::new(); links],
            latencies: Vec::new(),
        })
    }

    fn enable_trace(&mut self) {
        self.coding.trace = Some(Vec::new());
    }

    pub fn num_bins(&self) -> usize {
        self.coding.bins
    }

    /// Wall-clock time spent coding each pushed bin.
    pub fn latencies(&self) -> &[Duration] {
        &self.latencies
    }

    /// Codes one bin and returns the bytes each link's stream emitted.
    pub fn push_bin(&mut self, values: &[u32]) -> Result<Vec<Vec<u8>>> {
        let links = self.topology.num_links();
        if values.len() != links {
            return Err(Error::InvalidArgument(format!(
                "bin has {} values, topology has {links} links",
                values.len()
            )));
        }
        if let Some(link) = values.iter().position(|&v| v > self.v_max) {
            return Err(Error::ValueOutOfRange {
                bin: self.coding.bins,
                link,
                value: values[link],
                v_max: self.v_max,
            });
        }
        let start = Instant::now();
        let mut io = EncodeIo {
            encoders: &mut self.encoders,
            row: values,
        };
        self.coding.code_bin(&mut io)?;
        self.latencies.push(start.elapsed());
        Ok(self
            .encoders
            .iter_mut()
            .map(|e| e.drain_output().to_vec())
            .collect())
    }

    pub fn finish(self) -> Result<CompressedContainer> {
        Ok(CompressedContainer {
            method: self.spec.method,
            mode: self.spec.mode,
            topology: self.topology,
            num_bins: self.coding.bins,
            v_max: self.v_max,
            w_past: self.spec.context_bins(),
            bin_duration_s: self.bin_duration_s,
            model_hash: self.spec.model.map(model_hash),
            histograms: self.tables,
            streams: self.encoders.into_iter().map(Encoder::finish).collect(),
        })
    }
}

/// Histogram tables for static AC: one per link or one over all links.
pub fn static_tables(dataset: &TrafficDataset, mode: Mode) -> Result<Vec<Vec<(u32, u64)>>> {
    let alphabet = SymbolAlphabet::new(dataset.v_max());
    match mode {
        Mode::SingleLink => (0..dataset.num_links())
            .map(|l| Ok(HistogramModel::from_values(alphabet, dataset.column(l))?.entries().to_vec()))
            .collect(),
        Mode::NetworkWide => Ok(vec![HistogramModel::from_values(
            alphabet,
            dataset.values().iter().copied(),
        )?
        .entries()
        .to_vec()]),
    }
}

fn open_for(dataset: &TrafficDataset, spec: &CodecSpec<'_>) -> Result<Vec<Vec<(u32, u64)>>> {
    if spec.method == Method::StaticAc {
        static_tables(dataset, spec.mode)
    } else {
        Ok(Vec::new())
    }
}

pub fn compress(dataset: &TrafficDataset, spec: &CodecSpec<'_>) -> Result<CompressedContainer> {
    let tables = open_for(dataset, spec)?;
    let mut session = CompressSession::with_histograms(
        spec,
        dataset.topology().clone(),
        dataset.v_max(),
        dataset.bin_duration_s(),
        tables,
    )?;
    for row in dataset.rows() {
        session.push_bin(row)?;
    }
    session.finish()
}

/// Compression plus the per-bin latencies it took.
pub fn compress_timed(
    dataset: &TrafficDataset,
    spec: &CodecSpec<'_>,
) -> Result<(CompressedContainer, Vec<Duration>)> {
    let tables = open_for(dataset, spec)?;
    let mut session = CompressSession::with_histograms(
        spec,
        dataset.topology().clone(),
        dataset.v_max(),
        dataset.bin_duration_s(),
        tables,
    )?;
    for row in dataset.rows() {
        session.push_bin(row)?;
    }
    let latencies = session.latencies().to_vec();
    Ok((session.finish()?, latencies))
}

pub fn compress_with_trace(
    dataset: &TrafficDataset,
    spec: &CodecSpec<'_>,
) -> Result<(CompressedContainer, Vec<TraceEntry>)> {
    let tables = open_for(dataset, spec)?;
    let mut session = CompressSession::with_histograms(
        spec,
        dataset.topology().clone(),
        dataset.v_max(),
        dataset.bin_duration_s(),
        tables,
    )?;
    session.enable_trace();
    for row in dataset.rows() {
        session.push_bin(row)?;
    }
    let trace = session.coding.trace.take().unwrap_or_default();
    Ok((session.finish()?, trace))
}

pub fn decompress(container: &CompressedContainer, model: Option<&PredictorModel>) -> Result<TrafficDataset> {
    decode(container, model, false).map(|(d, _)| d)
}

pub fn decompress_with_trace(
    container: &CompressedContainer,
    model: Option<&PredictorModel>,
) -> Result<(TrafficDataset, Vec<TraceEntry>)> {
    decode(container, model, true)
}

fn decode(
    container: &CompressedContainer,
    model: Option<&PredictorModel>,
    trace: bool,
) -> Result<(TrafficDataset, Vec<TraceEntry>)> {
    let model = if container.method.is_neural() {
        let m = model.ok_or_else(|| {
            Error::ModelMismatch(format!("container was coded with {}; a model is required", container.method))
        })?;
        if Some(model_hash(m)) != container.model_hash {
            return Err(Error::ModelMismatch("model hash differs from the container header".into()));
        }
        if m.w_past != container.w_past {
            return Err(Error::Corrupt("window length differs from the model".into()));
        }
        Some(m)
    } else {
        None
    };
    let spec = CodecSpec {
        method: container.method,
        mode: container.mode,
        model,
        adaptive_window: if container.method == Method::AdaptiveAc {
            container.w_past
        } else {
            0
        },
    };
    if spec.context_bins() != container.w_past {
        return Err(Error::Corrupt("window length inconsistent with method".into()));
    }
    let links = container.num_links();
    if container.streams.len() != links {
        return Err(Error::Corrupt("stream count differs from link count".into()));
    }
    if let Some(s) = container
        .streams
        .iter()
        .find(|s| s.symbol_count != container.num_bins as u64)
    {
        return Err(Error::Corrupt(format!(
            "stream holds {} symbols, header says {} bins",
            s.symbol_count, container.num_bins
        )));
    }
    let mut coding = Coding::new(&spec, &container.topology, container.v_max, &container.histograms)?;
    if trace {
        coding.trace = Some(Vec::new());
    }
    let mut decoders: Vec<Decoder<'_>> = container.streams.iter().map(|s| Decoder::new(&s.bytes)).collect();
    let mut values = Vec::with_capacity(container.num_bins * links);
    for _ in 0..container.num_bins {
        let mut io = DecodeIo {
            decoders: &mut decoders,
        };
        values.extend(coding.code_bin(&mut io)?);
    }
    let dataset = TrafficDataset::with_v_max(
        container.topology.clone(),
        values,
        container.bin_duration_s,
        container.v_max,
    )
    .map_err(|e| Error::Corrupt(e.to_string()))?;
    Ok((dataset, coding.trace.unwrap_or_default()))
}
