//! Line-graph adjacency between directed links.

use crate::Topology;

/// For every link, the links feeding into its tail node (predecessors) and
/// the links leaving its head node (successors). Message passing aggregates
/// over the sorted, deduplicated union of both sets.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LinkGraph {
    predecessors: Vec<Vec<usize>>,
    successors: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
}

impl LinkGraph {
    pub fn new(topology: &Topology) -> Self {
        let links = topology.links();
        let mut by_tail = vec![Vec::new(); topology.num_nodes()];
        let mut by_head = vec![Vec::new(); topology.num_nodes()];
        for (id, &(tail, head)) in links.iter().enumerate() {
            by_tail[tail].push(id);
            by_head[head].push(id);
        }
        let mut predecessors = Vec::with_capacity(links.len());
        let mut successors = Vec::with_capacity(links.len());
        let mut neighbors = Vec::with_capacity(links.len());
        for (id, &(tail, head)) in links.iter().enumerate() {
            let pred: Vec<usize> = by_head[tail].iter().copied().filter(|&o| o != id).collect();
            let succ: Vec<usize> = by_tail[head].iter().copied().filter(|&o| o != id).collect();
            let mut union: Vec<usize> = pred.iter().chain(&succ).copied().collect();
            union.sort_unstable();
            union.dedup();
            predecessors.push(pred);
            successors.push(succ);
            neighbors.push(union);
        }
        Self {
            predecessors,
            successors,
            neighbors,
        }
    }

    /// A graph over `num_links` links with no adjacency at all.
    pub fn isolated(num_links: usize) -> Self {
        Self {
            predecessors: vec![Vec::new(); num_links],
            successors: vec![Vec::new(); num_links],
            neighbors: vec![Vec::new(); num_links],
        }
    }

    pub fn num_links(&self) -> usize {
        self.neighbors.len()
    }

    pub fn predecessors(&self, link: usize) -> &[usize] {
        &self.predecessors[link]
    }

    pub fn successors(&self, link: usize) -> &[usize] {
        &self.successors[link]
    }

    pub fn neighbors(&self, link: usize) -> &[usize] {
        &self.neighbors[link]
    }
}

pub fn build_link_graph(topology: &Topology) -> LinkGraph {
    LinkGraph::new(topology)
}
