//! Topologies, traffic matrices and the per-bin coding mask.

use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

/// Directed network topology. Links are kept sorted by `(tail, head)`; a
/// link's position in that order is its id everywhere in the crate.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Topology {
    num_nodes: usize,
    links: Vec<(usize, usize)>,
}

impl Topology {
    pub fn new(num_nodes: usize, mut links: Vec<(usize, usize)>) -> Result<Self> {
        for &(tail, head) in &links {
            if tail == head {
                return Err(Error::Topology(format!("self-loop on node {tail}")));
            }
            if tail >= num_nodes || head >= num_nodes {
                return Err(Error::Topology(format!(
                    "link ({tail}, {head}) references a node >= {num_nodes}"
                )));
            }
        }
        links.sort_unstable();
        if let Some(w) = links.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Topology(format!(
                "duplicate link ({}, {})",
                w[0].0, w[0].1
            )));
        }
        Ok(Self { num_nodes, links })
    }

    /// Every ordered pair `(a, b)` given once as an undirected edge becomes the
    /// two directed links `a → b` and `b → a`.
    pub fn bidirectional(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let links = edges.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
        Self::new(num_nodes, links)
    }

    /// The 14-node NSFNet backbone with its 21 bidirectional edges.
    pub fn nsfnet() -> Self {
        const EDGES: [(usize, usize); 21] = [
            (0, 1),
            (0, 2),
            (0, 3),
            (1, 2),
            (1, 7),
            (2, 5),
            (3, 4),
            (3, 8),
            (4, 5),
            (4, 6),
            (5, 12),
            (5, 13),
            (6, 7),
            (7, 10),
            (8, 9),
            (8, 11),
            (9, 10),
            (9, 12),
            (10, 11),
            (10, 13),
            (11, 12),
        ];
        Self::bidirectional(14, &EDGES).expect("static topology is valid")
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[(usize, usize)] {
        &self.links
    }

    pub fn link(&self, id: usize) -> (usize, usize) {
        self.links[id]
    }

    pub fn link_id(&self, tail: usize, head: usize) -> Option<usize> {
        self.links.binary_search(&(tail, head)).ok()
    }

    /// Parses the text format: `nodes N` on the first significant line, then
    /// one `tail head` pair per line. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut num_nodes = None;
        let mut links = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let first = parts.next().unwrap_or_default();
            let second = parts
                .next()
                .ok_or_else(|| err(line_no, "expected two fields".into()))?;
            if parts.next().is_some() {
                return Err(err(line_no, "expected two fields".into()));
            }
            match num_nodes {
                None => {
                    if first != "nodes" {
                        return Err(err(line_no, "expected `nodes N` header".into()));
                    }
                    let n = second
                        .parse::<usize>()
                        .map_err(|e| err(line_no, format!("node count: {e}")))?;
                    num_nodes = Some(n);
                }
                Some(_) => {
                    let tail = first
                        .parse::<usize>()
                        .map_err(|e| err(line_no, format!("tail: {e}")))?;
                    let head = second
                        .parse::<usize>()
                        .map_err(|e| err(line_no, format!("head: {e}")))?;
                    links.push((tail, head));
                }
            }
        }
        let num_nodes = num_nodes.ok_or_else(|| err(1, "missing `nodes N` header".into()))?;
        Self::new(num_nodes, links)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("nodes {}\n", self.num_nodes);
        for &(tail, head) in &self.links {
            let _ = writeln!(out, "{tail} {head}");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// A `T × L` matrix of per-bin link volumes over a topology.
///
/// `v_max` bounds the coding alphabet `0..=v_max`. It is part of the dataset
/// (and of every container) rather than a constant because real volumes are
/// unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficDataset {
    topology: Topology,
    values: Vec<u32>,
    num_bins: usize,
    bin_duration_s: f64,
    v_max: u32,
}

impl TrafficDataset {
    /// Builds a dataset whose `v_max` is the observed maximum.
    pub fn new(topology: Topology, values: Vec<u32>, bin_duration_s: f64) -> Result<Self> {
        let v_max = values.iter().copied().max().unwrap_or(0);
        Self::with_v_max(topology, values, bin_duration_s, v_max)
    }

    pub fn with_v_max(
        topology: Topology,
        values: Vec<u32>,
        bin_duration_s: f64,
        v_max: u32,
    ) -> Result<Self> {
        let links = topology.num_links();
        if links == 0 {
            return Err(Error::Dataset("topology has no links".into()));
        }
        if values.is_empty() || values.len() % links != 0 {
            return Err(Error::Dataset(format!(
                "{} values do not form whole rows of {links} links",
                values.len()
            )));
        }
        if !(bin_duration_s.is_finite() && bin_duration_s > 0.0) {
            return Err(Error::Dataset(format!(
                "bin duration {bin_duration_s} must be positive"
            )));
        }
        let num_bins = values.len() / links;
        if let Some(pos) = values.iter().position(|&v| v > v_max) {
            return Err(Error::ValueOutOfRange {
                bin: pos / links,
                link: pos % links,
                value: values[pos],
                v_max,
            });
        }
        Ok(Self {
            topology,
            values,
            num_bins,
            bin_duration_s,
            v_max,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn num_links(&self) -> usize {
        self.topology.num_links()
    }

    pub fn v_max(&self) -> u32 {
        self.v_max
    }

    pub fn bin_duration_s(&self) -> f64 {
        self.bin_duration_s
    }

    /// Row-major values, one row of `L` links per bin.
    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn value(&self, bin: usize, link: usize) -> u32 {
        self.values[bin * self.num_links() + link]
    }

    pub fn row(&self, bin: usize) -> &[u32] {
        let l = self.num_links();
        &self.values[bin * l..(bin + 1) * l]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, u32> {
        self.values.chunks_exact(self.num_links())
    }

    pub fn column(&self, link: usize) -> Vec<u32> {
        self.rows().map(|row| row[link]).collect()
    }

    /// Bins `range` as a new dataset that keeps this dataset's `v_max`.
    pub fn slice_bins(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.num_bins {
            return Err(Error::InvalidArgument(format!(
                "bin range {range:?} outside 0..{}",
                self.num_bins
            )));
        }
        let l = self.num_links();
        Self::with_v_max(
            self.topology.clone(),
            self.values[range.start * l..range.end * l].to_vec(),
            self.bin_duration_s,
            self.v_max,
        )
    }

    /// Number of `w_past + 1`-bin windows (past bins plus the label bin).
    pub fn num_windows(&self, w_past: usize) -> usize {
        self.num_bins.saturating_sub(w_past)
    }

    /// The window whose label is bin `label_bin`, with the label fully unknown.
    pub fn window(&self, label_bin: usize, w_past: usize) -> TrafficWindow {
        assert!(label_bin >= w_past && label_bin < self.num_bins);
        let l = self.num_links();
        TrafficWindow {
            past: self.values[(label_bin - w_past) * l..label_bin * l].to_vec(),
            label: self.row(label_bin).to_vec(),
            mask: Mask::unknown(l),
        }
    }
}

/// Which links of the bin being coded are already known.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    known: Vec<bool>,
}

impl Mask {
    pub fn unknown(num_links: usize) -> Self {
        Self {
            known: vec![false; num_links],
        }
    }

    pub fn from_known(known: Vec<bool>) -> Self {
        Self { known }
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }

    pub fn is_known(&self, link: usize) -> bool {
        self.known[link]
    }

    pub fn set_known(&mut self, link: usize) {
        self.known[link] = true;
    }

    pub fn known(&self) -> &[bool] {
        &self.known
    }

    pub fn all_known(&self) -> bool {
        self.known.iter().all(|&k| k)
    }

    pub fn count_unknown(&self) -> usize {
        self.known.iter().filter(|&&k| !k).count()
    }
}

/// `w_past` fully known bins followed by a partially known label bin.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficWindow {
    /// Row-major `w_past × L`.
    pub past: Vec<u32>,
    pub label: Vec<u32>,
    pub mask: Mask,
}

impl TrafficWindow {
    pub fn num_links(&self) -> usize {
        self.label.len()
    }

    pub fn w_past(&self) -> usize {
        self.past.len() / self.label.len().max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn link_order_is_canonical() {
        let a = Topology::new(3, vec![(2, 0), (0, 1), (1, 2)]).unwrap();
        let b = Topology::new(3, vec![(1, 2), (2, 0), (0, 1)]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.links(), &[(0, 1), (1, 2), (2, 0)]);
        assert_eq!(a.link_id(2, 0), Some(2));
        assert_eq!(a.link_id(0, 2), None);
    }

    #[test]
    fn rejects_bad_links() {
        assert!(Topology::new(2, vec![(0, 0)]).is_err());
        assert!(Topology::new(2, vec![(0, 2)]).is_err());
        assert!(Topology::new(2, vec![(0, 1), (0, 1)]).is_err());
    }

    #[test]
    fn nsfnet_shape() {
        let t = Topology::nsfnet();
        assert_eq!(t.num_nodes(), 14);
        assert_eq!(t.num_links(), 42);
    }

    #[test]
    fn topology_text_roundtrip() {
        let t = Topology::nsfnet();
        let back = Topology::parse(&t.to_text(), Path::new("mem")).unwrap();
        assert_eq!(t, back);
        let shuffled = "# comment\nnodes 3\n\n2 0\n0 1 # trailing\n1 2\n";
        let parsed = Topology::parse(shuffled, Path::new("mem")).unwrap();
        assert_eq!(parsed.links(), &[(0, 1), (1, 2), (2, 0)]);
        assert!(Topology::parse("0 1\n", Path::new("mem")).is_err());
        assert!(Topology::parse("nodes 2\n0\n", Path::new("mem")).is_err());
    }

    #[test]
    fn dataset_validation() {
        let topo = Topology::new(2, vec![(0, 1), (1, 0)]).unwrap();
        let d = TrafficDataset::new(topo.clone(), vec![1, 2, 3, 4, 5, 6], 300.0).unwrap();
        assert_eq!(d.num_bins(), 3);
        assert_eq!(d.v_max(), 6);
        assert_eq!(d.row(1), &[3, 4]);
        assert_eq!(d.column(1), vec![2, 4, 6]);
        assert!(TrafficDataset::new(topo.clone(), vec![1, 2, 3], 300.0).is_err());
        assert!(TrafficDataset::new(topo.clone(), vec![], 300.0).is_err());
        let err = TrafficDataset::with_v_max(topo, vec![1, 9], 300.0, 5).unwrap_err();
        assert!(matches!(err, Error::ValueOutOfRange { bin: 0, link: 1, .. }));
    }

    #[test]
    fn windows() {
        let topo = Topology::new(2, vec![(0, 1), (1, 0)]).unwrap();
        let d = TrafficDataset::new(topo, (0..10).collect(), 300.0).unwrap();
        assert_eq!(d.num_windows(2), 3);
        let w = d.window(3, 2);
        assert_eq!(w.past, vec![2, 3, 4, 5]);
        assert_eq!(w.label, vec![6, 7]);
        assert_eq!(w.w_past(), 2);
        assert_eq!(w.mask.count_unknown(), 2);
    }
}
