//! Synthetic correlated traffic: one sine-shaped flow per ordered node pair,
//! routed over shortest paths and summed onto links.
//!
//! Spatial correlation is the share of flows that use one common
//! period/phase; the remaining flows draw their own. Temporal correlation is
//! degraded by adding AR noise to the complementary share of flows.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::metrics::{median, pearson};
use crate::{Error, Result, Topology, TrafficDataset};

/// Path for every ordered node pair, as a sequence of link ids.
pub type Routes = BTreeMap<(usize, usize), Vec<usize>>;

/// Hop-count shortest paths; among equally short paths the lexicographically
/// smallest node sequence wins.
pub fn shortest_paths(topology: &Topology) -> Result<Routes> {
    let n = topology.num_nodes();
    let mut succ = vec![Vec::new(); n];
    let mut pred = vec![Vec::new(); n];
    for &(a, b) in topology.links() {
        succ[a].push(b);
        pred[b].push(a);
    }
    // links are sorted, so successor lists are ascending
    let mut routes = Routes::new();
    for dst in 0..n {
        // hop distance of every node to dst over reversed links
        let mut dist = vec![usize::MAX; n];
        dist[dst] = 0;
        let mut queue = VecDeque::from([dst]);
        while let Some(u) = queue.pop_front() {
            for &p in &pred[u] {
                if dist[p] == usize::MAX {
                    dist[p] = dist[u] + 1;
                    queue.push_back(p);
                }
            }
        }
        for src in (0..n).filter(|&s| s != dst) {
            if dist[src] == usize::MAX {
                return Err(Error::Unreachable(format!("node {dst} unreachable from node {src}")));
            }
            let mut path = Vec::with_capacity(dist[src]);
            let mut u = src;
            while u != dst {
                let next = *succ[u]
                    .iter()
                    .find(|&&v| dist[v] != usize::MAX && dist[v] + 1 == dist[u])
                    .expect("a node on a shortest path has a closer successor");
                path.push(topology.link_id(u, next).expect("link exists"));
                u = next;
            }
            routes.insert((src, dst), path);
        }
    }
    Ok(routes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArNoise {
    pub coefficients: Vec<f64>,
    pub innovation_std: f64,
}

impl Default for ArNoise {
    fn default() -> Self {
        Self {
            coefficients: vec![0.8],
            innovation_std: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSignalSpec {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
    pub noise_std: f64,
    pub ar_noise: Option<ArNoise>,
}

impl FlowSignalSpec {
    /// `amplitude·(sin(2π(t + phase)/period) + 1)` plus white and AR noise.
    pub fn sample<R: Rng>(&self, bins: usize, rng: &mut R) -> Vec<f64> {
        assert!(self.period >= 2.0, "period must be at least 2 bins");
        let white = Normal::new(0.0, self.noise_std.max(0.0)).expect("valid std");
        let mut ar_state: Vec<f64> = Vec::new();
        let innovation = self
            .ar_noise
            .as_ref()
            .map(|ar| Normal::new(0.0, ar.innovation_std.max(0.0)).expect("valid std"));
        (0..bins)
            .map(|t| {
                let base = self.amplitude * ((2.0 * PI * (t as f64 + self.phase) / self.period).sin() + 1.0);
                let mut x = base;
                if self.noise_std > 0.0 {
                    x += white.sample(rng);
                }
                if let (Some(ar), Some(innov)) = (&self.ar_noise, &innovation) {
                    let mut e = innov.sample(rng);
                    for (k, c) in ar.coefficients.iter().enumerate() {
                        if let Some(prev) = ar_state.len().checked_sub(k + 1).map(|i| ar_state[i]) {
                            e += c * prev;
                        }
                    }
                    ar_state.push(e);
                    x += e;
                }
                x
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub topology: Topology,
    pub bins: usize,
    pub spatial_pct: u32,
    pub temporal_pct: u32,
    pub seed: u64,
    pub amplitude: f64,
    /// Per-flow white noise.
    pub noise_std: f64,
    /// Periods are drawn uniformly from this range, in bins.
    pub period_range: (f64, f64),
    pub ar_noise: ArNoise,
    pub bin_duration_s: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            topology: Topology::nsfnet(),
            bins: 1005,
            spatial_pct: 100,
            temporal_pct: 100,
            seed: 0,
            amplitude: 40.0,
            noise_std: 2.0,
            period_range: (24.0, 96.0),
            ar_noise: ArNoise::default(),
            bin_duration_s: 300.0,
        }
    }
}

/// Flows and their routes, before aggregation onto links.
#[derive(Debug, Clone)]
pub struct SyntheticFlows {
    pub pairs: Vec<(usize, usize)>,
    pub specs: Vec<FlowSignalSpec>,
    pub series: Vec<Vec<f64>>,
    pub routes: Routes,
}

impl SyntheticFlows {
    /// Exact (unrounded) sum of traversing flows, row-major `bins × L`.
    pub fn link_sums(&self, topology: &Topology) -> Vec<f64> {
        let links = topology.num_links();
        let bins = self.series.first().map_or(0, Vec::len);
        let mut sums = vec![0.0; bins * links];
        for (pair, series) in self.pairs.iter().zip(&self.series) {
            for &link in &self.routes[pair] {
                for (t, x) in series.iter().enumerate() {
                    sums[t * links + link] += x;
                }
            }
        }
        sums
    }
}

fn share(pct: u32, count: usize) -> usize {
    ((f64::from(pct) / 100.0) * count as f64).round() as usize
}

pub fn gen_flows(config: &SynthConfig) -> Result<SyntheticFlows> {
    if config.spatial_pct > 100 || config.temporal_pct > 100 {
        return Err(Error::InvalidArgument("percentages must lie in 0..=100".into()));
    }
    let (lo, hi) = config.period_range;
    if !(lo >= 2.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("period range {lo}..{hi}")));
    }
    if !(config.noise_std >= 0.0 && config.ar_noise.innovation_std >= 0.0) {
        return Err(Error::InvalidArgument("noise levels must be non-negative".into()));
    }
    let routes = shortest_paths(&config.topology)?;
    let pairs: Vec<(usize, usize)> = routes.keys().copied().collect();
    let flows = pairs.len();

    let mut master_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let draw_period = |rng: &mut ChaCha8Rng| if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let master_period = draw_period(&mut master_rng);
    let master_phase = master_rng.gen_range(0.0..master_period);
    let mut order: Vec<usize> = (0..flows).collect();
    order.shuffle(&mut master_rng);
    let mut shared = vec![false; flows];
    for &f in &order[..share(config.spatial_pct, flows)] {
        shared[f] = true;
    }
    order.shuffle(&mut master_rng);
    let mut noisy = vec![false; flows];
    for &f in &order[..share(100 - config.temporal_pct, flows)] {
        noisy[f] = true;
    }

    let mut specs = Vec::with_capacity(flows);
    let mut series = Vec::with_capacity(flows);
    for f in 0..flows {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(f as u64 + 1);
        let (period, phase) = if shared[f] {
            (master_period, master_phase)
        } else {
            let p = draw_period(&mut rng);
            (p, rng.gen_range(0.0..p))
        };
        let spec = FlowSignalSpec {
            amplitude: config.amplitude,
            period,
            phase,
            noise_std: config.noise_std,
            ar_noise: noisy[f].then(|| config.ar_noise.clone()),
        };
        series.push(spec.sample(config.bins, &mut rng));
        specs.push(spec);
    }
    Ok(SyntheticFlows {
        pairs,
        specs,
        series,
        routes,
    })
}

pub fn gen_synthetic(config: &SynthConfig) -> Result<TrafficDataset> {
    if config.bins == 0 {
        return Err(Error::InvalidArgument("bins must be positive".into()));
    }
    let flows = gen_flows(config)?;
    let values = flows
        .link_sums(&config.topology)
        .into_iter()
        .map(|x| x.max(0.0).round() as u32)
        .collect();
    TrafficDataset::new(config.topology.clone(), values, config.bin_duration_s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    /// `L × L`; `None` where a link is constant.
    pub pearson: Vec<Vec<Option<f64>>>,
    /// Per link: `|Δmean|/σ + |Δvar|/σ²` between the two halves of the
    /// series, σ² the whole-series variance; `None` for constant links.
    pub drift: Vec<Option<f64>>,
}

impl CorrelationReport {
    /// Median of `|r|` over distinct link pairs with a defined correlation.
    pub fn median_abs_pearson(&self) -> Option<f64> {
        let mut values = Vec::new();
        for (i, row) in self.pearson.iter().enumerate() {
            values.extend(row.iter().skip(i + 1).flatten().map(|r| r.abs()));
        }
        median(&values)
    }

    pub fn median_drift(&self) -> Option<f64> {
        let values: Vec<f64> = self.drift.iter().flatten().copied().collect();
        median(&values)
    }

    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
        let mut out = format!(
            "links {}\nmedian |pearson| {}\nmedian drift {}\n",
            self.pearson.len(),
            fmt(self.median_abs_pearson()),
            fmt(self.median_drift())
        );
        out.push_str("link drift\n");
        for (l, d) in self.drift.iter().enumerate() {
            out.push_str(&format!("{l} {}\n", fmt(*d)));
        }
        out
    }
}

fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

pub fn correlation_report(dataset: &TrafficDataset) -> Result<CorrelationReport> {
    if dataset.num_bins() < 4 {
        return Err(Error::Dataset("correlation report needs at least 4 bins".into()));
    }
    let columns: Vec<Vec<f64>> = (0..dataset.num_links())
        .map(|l| dataset.column(l).into_iter().map(f64::from).collect())
        .collect();
    let pearson = columns
        .iter()
        .map(|a| columns.iter().map(|b| pearson(a, b).ok()).collect())
        .collect();
    let drift = columns
        .iter()
        .map(|c| {
            let (_, var) = moments(c);
            if var == 0.0 {
                return None;
            }
            let (first, second) = c.split_at(c.len() / 2);
            let (m1, v1) = moments(first);
            let (m2, v2) = moments(second);
            Some((m1 - m2).abs() / var.sqrt() + (v1 - v2).abs() / var)
        })
        .collect();
    Ok(CorrelationReport { pearson, drift })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Floyd–Warshall hop counts.
    fn hop_matrix(t: &Topology) -> Vec<Vec<usize>> {
        let n = t.num_nodes();
        let inf = usize::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0;
        }
        for &(a, b) in t.links() {
            d[a][b] = 1;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
                }
            }
        }
        d
    }

    /// Every shortest node sequence from `src` to `dst`, by exhaustive DFS.
    fn all_shortest(t: &Topology, src: usize, dst: usize, hops: usize) -> Vec<Vec<usize>> {
        fn go(t: &Topology, path: &mut Vec<usize>, dst: usize, left: usize, out: &mut Vec<Vec<usize>>) {
            let u = *path.last().unwrap();
            if left == 0 {
                if u == dst {
                    out.push(path.clone());
                }
                return;
            }
            for &(a, b) in t.links() {
                if a == u && !path.contains(&b) {
                    path.push(b);
                    go(t, path, dst, left - 1, out);
                    path.pop();
                }
            }
        }
        let mut out = Vec::new();
        go(t, &mut vec![src], dst, hops, &mut out);
        out
    }

    fn nodes_of(t: &Topology, src: usize, path: &[usize]) -> Vec<usize> {
        let mut nodes = vec![src];
        for &l in path {
            let (a, b) = t.link(l);
            assert_eq!(a, *nodes.last().unwrap(), "path is not contiguous");
            nodes.push(b);
        }
        nodes
    }

    #[test]
    fn two_node_pair() {
        let t = Topology::bidirectional(2, &[(0, 1)]).unwrap();
        let r = shortest_paths(&t).unwrap();
        assert_eq!(r[&(0, 1)], vec![t.link_id(0, 1).unwrap()]);
        assert_eq!(r[&(1, 0)], vec![t.link_id(1, 0).unwrap()]);
    }

    #[test]
    fn directed_triangle() {
        let t = Topology::new(3, vec![(0, 1), (1, 2), (2, 0)]).unwrap();
        let r = shortest_paths(&t).unwrap();
        assert_eq!(
            r[&(0, 2)],
            vec![t.link_id(0, 1).unwrap(), t.link_id(1, 2).unwrap()]
        );
    }

    #[test]
    fn unreachable_pair_is_an_error() {
        let t = Topology::new(3, vec![(0, 1), (1, 2)]).unwrap();
        assert!(matches!(shortest_paths(&t), Err(Error::Unreachable(_))));
    }

    #[test]
    fn nsfnet_paths_match_oracle() {
        let t = Topology::nsfnet();
        let r = shortest_paths(&t).unwrap();
        let d = hop_matrix(&t);
        assert_eq!(r.len(), 14 * 13);
        let mut max_hops = 0;
        for (&(s, dst), path) in &r {
            assert_eq!(path.len(), d[s][dst]);
            let nodes = nodes_of(&t, s, path);
            assert_eq!(*nodes.last().unwrap(), dst);
            let best = all_shortest(&t, s, dst, d[s][dst]).into_iter().min().unwrap();
            assert_eq!(nodes, best);
            max_hops = max_hops.max(path.len());
        }
        let oracle_max = d.iter().flatten().copied().max().unwrap();
        assert_eq!(max_hops, oracle_max);
    }

    fn small(spatial: u32, temporal: u32, seed: u64) -> SynthConfig {
        SynthConfig {
            bins: 400,
            spatial_pct: spatial,
            temporal_pct: temporal,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn fully_shared_noiseless_flows_are_collinear() {
        let cfg = SynthConfig {
            noise_std: 0.0,
            ..small(100, 100, 7)
        };
        let data = gen_synthetic(&cfg).unwrap();
        let rep = correlation_report(&data).unwrap();
        for row in &rep.pearson {
            for r in row.iter().flatten() {
                assert!(*r >= 0.99, "{r}");
            }
        }
    }

    #[test]
    fn spatial_share_raises_correlation() {
        let lo = correlation_report(&gen_synthetic(&small(0, 100, 1)).unwrap()).unwrap();
        let hi = correlation_report(&gen_synthetic(&small(100, 100, 1)).unwrap()).unwrap();
        assert!(lo.median_abs_pearson().unwrap() < hi.median_abs_pearson().unwrap());
    }

    #[test]
    fn links_are_exact_flow_sums() {
        let cfg = small(60, 30, 4);
        let flows = gen_flows(&cfg).unwrap();
        let data = gen_synthetic(&cfg).unwrap();
        let sums = flows.link_sums(&cfg.topology);
        for (v, s) in data.values().iter().zip(&sums) {
            assert_eq!(*v, s.max(0.0).round() as u32);
        }
        // re-aggregate independently of link_sums
        let links = cfg.topology.num_links();
        let mut manual = vec![0.0; cfg.bins * links];
        for (f, &(s, d)) in flows.pairs.iter().enumerate() {
            let mut u = s;
            for &l in &flows.routes[&(s, d)] {
                let (a, b) = cfg.topology.link(l);
                assert_eq!(a, u);
                u = b;
                for t in 0..cfg.bins {
                    manual[t * links + l] += flows.series[f][t];
                }
            }
            assert_eq!(u, d);
        }
        assert_eq!(manual, sums);
    }

    #[test]
    fn generation_is_seeded() {
        let a = gen_synthetic(&small(30, 60, 9)).unwrap();
        let b = gen_synthetic(&small(30, 60, 9)).unwrap();
        let c = gen_synthetic(&small(30, 60, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn shares_are_respected() {
        let flows = gen_flows(&small(60, 30, 2)).unwrap();
        let total = flows.specs.len();
        let noisy = flows.specs.iter().filter(|s| s.ar_noise.is_some()).count();
        assert_eq!(noisy, share(70, total));
        let mut periods: BTreeMap<u64, usize> = BTreeMap::new();
        for s in &flows.specs {
            *periods.entry(s.period.to_bits()).or_default() += 1;
        }
        assert_eq!(*periods.values().max().unwrap(), share(60, total));
    }

    #[test]
    fn duplicate_columns_correlate_perfectly() {
        let t = Topology::new(3, vec![(0, 1), (1, 2), (2, 0)]).unwrap();
        let mut values = Vec::new();
        for i in 0..10u32 {
            values.extend([i * i % 7, i * i % 7, 5]);
        }
        let data = TrafficDataset::new(t, values, 1.0).unwrap();
        let rep = correlation_report(&data).unwrap();
        assert!((rep.pearson[0][1].unwrap() - 1.0).abs() < 1e-12);
        assert!((rep.pearson[0][0].unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rep.pearson[2][0], None);
        assert_eq!(rep.drift[2], None);
        assert!(rep.to_text().contains("n/a"));
    }

    #[test]
    fn temporal_share_lowers_drift() {
        // averaged over seeds: one draw of 500-bin halves is too noisy
        let drift = |temporal| {
            (0..5)
                .map(|seed| {
                    let cfg = SynthConfig {
                        bins: 1000,
                        ..small(60, temporal, seed)
                    };
                    correlation_report(&gen_synthetic(&cfg).unwrap())
                        .unwrap()
                        .median_drift()
                        .unwrap()
                })
                .sum::<f64>()
                / 5.0
        };
        let d: Vec<f64> = [0, 30, 60, 100].into_iter().map(drift).collect();
        assert!(d.windows(2).all(|w| w[0] >= w[1]), "{d:?}");
    }
}
