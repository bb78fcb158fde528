//! Global graph, labeled subgraphs, partial observations, and k-hop
//! neighborhoods around an observed node set.

use std::collections::{BTreeSet, HashSet};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub type NodeId = usize;
pub type Edge = (NodeId, NodeId);

/// The shared graph all subgraphs live in. Edges are directed, sorted and
/// unique; neighborhoods ignore direction.
#[derive(Clone, Debug)]
pub struct GlobalGraph {
    num_nodes: usize,
    edges: Vec<Edge>,
    reversed: Vec<Edge>,
    out_adj: Vec<Vec<NodeId>>,
    in_adj: Vec<Vec<NodeId>>,
    density: f64,
    feature_dim_in: usize,
}

impl GlobalGraph {
    /// Builds the graph, dropping duplicate edges. With `symmetrize`, every
    /// edge is stored in both directions.
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = Edge>,
        symmetrize: bool,
    ) -> Result<Self> {
        let mut list = Vec::new();
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return invalid(format!(
                    "edge ({u}, {v}) out of range for {num_nodes} nodes"
                ));
            }
            list.push((u, v));
            if symmetrize && u != v {
                list.push((v, u));
            }
        }
        list.sort_unstable();
        list.dedup();

        let mut out_adj = vec![Vec::new(); num_nodes];
        let mut in_adj = vec![Vec::new(); num_nodes];
        for &(u, v) in &list {
            out_adj[u].push(v);
            in_adj[v].push(u);
        }
        let mut reversed: Vec<Edge> = list.iter().map(|&(u, v)| (v, u)).collect();
        reversed.sort_unstable();
        let density = if num_nodes > 1 {
            list.len() as f64 / (num_nodes as f64 * (num_nodes as f64 - 1.0))
        } else {
            0.0
        };
        Ok(Self {
            num_nodes,
            edges: list,
            reversed,
            out_adj,
            in_adj,
            density,
            feature_dim_in: 0,
        })
    }

    pub fn with_feature_dim(mut self, dim: usize) -> Self {
        self.feature_dim_in = dim;
        self
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Every edge with its direction flipped.
    pub fn reversed_edges(&self) -> &[Edge] {
        &self.reversed
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn feature_dim_in(&self) -> usize {
        self.feature_dim_in
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        u < self.num_nodes && self.out_adj[u].binary_search(&v).is_ok()
    }

    pub fn out_neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.out_adj[v]
    }

    pub fn in_neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.in_adj[v]
    }

    /// Edges of the global graph with both endpoints in `nodes`.
    pub fn induced_edges(&self, nodes: &[NodeId]) -> Vec<Edge> {
        let set: HashSet<NodeId> = nodes.iter().copied().collect();
        let mut out = Vec::new();
        for &u in nodes {
            if u >= self.num_nodes {
                continue;
            }
            for &v in &self.out_adj[u] {
                if set.contains(&v) {
                    out.push((u, v));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// One labeled subgraph of the global graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgraphRecord {
    /// Sorted, unique.
    pub node_ids: Vec<NodeId>,
    pub edges: Vec<Edge>,
    pub label: usize,
    pub subgraph_feature: Option<Vec<f64>>,
    pub observation_order: Option<Vec<NodeId>>,
}

impl SubgraphRecord {
    /// Record whose edges are the global edges induced on `nodes`.
    pub fn induced(graph: &GlobalGraph, mut nodes: Vec<NodeId>, label: usize) -> Self {
        nodes.sort_unstable();
        nodes.dedup();
        let edges = graph.induced_edges(&nodes);
        Self {
            node_ids: nodes,
            edges,
            label,
            subgraph_feature: None,
            observation_order: None,
        }
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.node_ids.binary_search(&v).is_ok()
    }

    pub fn validate(&self, graph: &GlobalGraph) -> Result<()> {
        if self.node_ids.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("subgraph node ids must be sorted and unique");
        }
        if let Some(&v) = self.node_ids.iter().find(|&&v| v >= graph.num_nodes()) {
            return invalid(format!("subgraph node {v} outside the global graph"));
        }
        for &(u, v) in &self.edges {
            if !self.contains(u) || !self.contains(v) {
                return invalid(format!("subgraph edge ({u}, {v}) leaves the node set"));
            }
            if !graph.has_edge(u, v) {
                return invalid(format!("subgraph edge ({u}, {v}) not in the global graph"));
            }
        }
        if let Some(order) = &self.observation_order {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != self.node_ids {
                return invalid("observation order is not a permutation of the node ids");
            }
        }
        Ok(())
    }
}

/// Where the edges of an observed node set come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeSource {
    /// Edges of the parent subgraph with both endpoints observed.
    #[default]
    Subgraph,
    /// Global-graph edges induced on the observed nodes.
    Global,
}

/// The observed portion of a subgraph.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialSubgraph {
    /// In observation order (sampling order for unordered data).
    pub observed_ids: Vec<NodeId>,
    pub observed_edges: Vec<Edge>,
    pub parent_index: usize,
}

impl PartialSubgraph {
    pub fn len(&self) -> usize {
        self.observed_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed_ids.is_empty()
    }
}

fn check_observed(subgraph: &SubgraphRecord, observed: &[NodeId]) -> Result<()> {
    if observed.is_empty() {
        return invalid("observed node set is empty");
    }
    let mut seen = HashSet::with_capacity(observed.len());
    for &v in observed {
        if !subgraph.contains(v) {
            return invalid(format!("observed node {v} is not in the subgraph"));
        }
        if !seen.insert(v) {
            return invalid(format!("observed node {v} listed twice"));
        }
    }
    Ok(())
}

/// Partial subgraph on `observed` with the parent's induced edges.
pub fn induced_partial_subgraph(
    subgraph: &SubgraphRecord,
    parent_index: usize,
    observed: &[NodeId],
) -> Result<PartialSubgraph> {
    check_observed(subgraph, observed)?;
    let set: HashSet<NodeId> = observed.iter().copied().collect();
    let observed_edges = subgraph
        .edges
        .iter()
        .copied()
        .filter(|(u, v)| set.contains(u) && set.contains(v))
        .collect();
    Ok(PartialSubgraph {
        observed_ids: observed.to_vec(),
        observed_edges,
        parent_index,
    })
}

pub fn partial_subgraph(
    graph: &GlobalGraph,
    subgraph: &SubgraphRecord,
    parent_index: usize,
    observed: &[NodeId],
    source: EdgeSource,
) -> Result<PartialSubgraph> {
    match source {
        EdgeSource::Subgraph => induced_partial_subgraph(subgraph, parent_index, observed),
        EdgeSource::Global => {
            check_observed(subgraph, observed)?;
            Ok(PartialSubgraph {
                observed_ids: observed.to_vec(),
                observed_edges: graph.induced_edges(observed),
                parent_index,
            })
        }
    }
}

/// Nodes within k hops of an observed set, plus the edges among them.
#[derive(Clone, Debug, PartialEq)]
pub struct KhopNeighborhood {
    /// Sorted; excludes the observed nodes.
    pub neighbors: Vec<NodeId>,
    /// Edges among observed ∪ neighbors after edge dropout.
    pub edges: Vec<Edge>,
}

/// A k-hop neighborhood split by membership in the full subgraph.
#[derive(Clone, Debug, PartialEq)]
pub struct KhopPartition {
    pub neighbors: Vec<NodeId>,
    pub in_subgraph: Vec<NodeId>,
    pub outside: Vec<NodeId>,
    pub edges_khop: Vec<Edge>,
}

impl KhopPartition {
    pub fn build<R: Rng + ?Sized>(
        graph: &GlobalGraph,
        subgraph: &SubgraphRecord,
        observed: &[NodeId],
        k: usize,
        cap: Option<usize>,
        edge_drop: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let hood = khop_neighbors(graph, observed, k, cap, edge_drop, rng)?;
        let (in_subgraph, outside) = partition_khop(&hood.neighbors, subgraph);
        Ok(Self {
            neighbors: hood.neighbors,
            in_subgraph,
            outside,
            edges_khop: hood.edges,
        })
    }
}

/// Level-by-level BFS from `observed` up to distance `k` (edge direction
/// ignored). If more than `cap` neighbors are found, a uniform subset of size
/// `cap` is kept. Each edge among the kept nodes is dropped with probability
/// `edge_drop`.
pub fn khop_neighbors<R: Rng + ?Sized>(
    graph: &GlobalGraph,
    observed: &[NodeId],
    k: usize,
    cap: Option<usize>,
    edge_drop: f64,
    rng: &mut R,
) -> Result<KhopNeighborhood> {
    if k == 0 {
        return invalid("k must be at least 1");
    }
    if observed.is_empty() {
        return invalid("observed node set is empty");
    }
    if cap == Some(0) {
        return invalid("neighborhood cap must be positive");
    }
    if !(0.0..1.0).contains(&edge_drop) {
        return invalid(format!("edge drop probability {edge_drop} outside [0, 1)"));
    }
    if let Some(&v) = observed.iter().find(|&&v| v >= graph.num_nodes()) {
        return invalid(format!("observed node {v} outside the global graph"));
    }

    let mut visited: HashSet<NodeId> = observed.iter().copied().collect();
    let mut frontier: Vec<NodeId> = visited.iter().copied().collect();
    let mut neighbors = Vec::new();
    for _ in 0..k {
        let mut next = Vec::new();
        for &u in &frontier {
            for &v in graph.out_neighbors(u).iter().chain(graph.in_neighbors(u)) {
                if visited.insert(v) {
                    next.push(v);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        neighbors.extend_from_slice(&next);
        frontier = next;
    }
    neighbors.sort_unstable();

    if let Some(cap) = cap {
        if neighbors.len() > cap {
            let mut keep: Vec<NodeId> = sample(rng, neighbors.len(), cap)
                .into_iter()
                .map(|i| neighbors[i])
                .collect();
            keep.sort_unstable();
            neighbors = keep;
        }
    }

    let members: HashSet<NodeId> = observed.iter().chain(&neighbors).copied().collect();
    let mut sources: Vec<NodeId> = members.iter().copied().collect();
    sources.sort_unstable();
    let mut edges = Vec::new();
    for u in sources {
        for &v in graph.out_neighbors(u) {
            if members.contains(&v) && (edge_drop == 0.0 || rng.random::<f64>() >= edge_drop) {
                edges.push((u, v));
            }
        }
    }
    Ok(KhopNeighborhood { neighbors, edges })
}

/// Splits neighbors into (inside the subgraph, outside the subgraph).
pub fn partition_khop(
    neighbors: &[NodeId],
    subgraph: &SubgraphRecord,
) -> (Vec<NodeId>, Vec<NodeId>) {
    neighbors.iter().partition(|&&v| subgraph.contains(v))
}

/// Reference k-hop closure: repeatedly sweeps the whole edge list. Slow,
/// no cap, no dropout; used to cross-check [`khop_neighbors`].
pub fn bfs_khop_oracle(graph: &GlobalGraph, observed: &[NodeId], k: usize) -> BTreeSet<NodeId> {
    let start: BTreeSet<NodeId> = observed.iter().copied().collect();
    let mut reached = start.clone();
    for _ in 0..k {
        let mut grown = reached.clone();
        for &(u, v) in graph.edges() {
            if reached.contains(&u) {
                grown.insert(v);
            }
            if reached.contains(&v) {
                grown.insert(u);
            }
        }
        if grown.len() == reached.len() {
            break;
        }
        reached = grown;
    }
    reached.difference(&start).copied().collect()
}
