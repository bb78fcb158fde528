//! Stochastic graph augmentations of a subgraph view.

use std::collections::HashSet;

use rand::Rng;

use crate::error::{invalid, Result};
use crate::graph::{Edge, NodeId};

/// Nodes, edges among them, and which nodes have their features zeroed.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgraphView {
    pub node_ids: Vec<NodeId>,
    pub edges: Vec<Edge>,
    pub masked: Vec<bool>,
}

impl SubgraphView {
    pub fn new(node_ids: Vec<NodeId>, edges: Vec<Edge>) -> Self {
        let masked = vec![false; node_ids.len()];
        Self {
            node_ids,
            edges,
            masked,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.masked.len() != self.node_ids.len() {
            return invalid("mask length differs from node count");
        }
        let nodes: HashSet<NodeId> = self.node_ids.iter().copied().collect();
        if nodes.len() != self.node_ids.len() {
            return invalid("duplicate node in view");
        }
        if let Some(&(u, v)) = self
            .edges
            .iter()
            .find(|(u, v)| !nodes.contains(u) || !nodes.contains(v))
        {
            return invalid(format!("edge ({u}, {v}) leaves the view"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Augmentation {
    NodeDrop(f64),
    EdgePerturb(f64),
    AttrMask(f64),
}

impl Augmentation {
    pub fn probability(self) -> f64 {
        match self {
            Augmentation::NodeDrop(p)
            | Augmentation::EdgePerturb(p)
            | Augmentation::AttrMask(p) => p,
        }
    }

    /// The three augmentations at a shared strength.
    pub fn all(p: f64) -> [Augmentation; 3] {
        [
            Augmentation::NodeDrop(p),
            Augmentation::EdgePerturb(p),
            Augmentation::AttrMask(p),
        ]
    }
}

pub fn augment<R: Rng + ?Sized>(
    aug: Augmentation,
    view: &SubgraphView,
    rng: &mut R,
) -> Result<SubgraphView> {
    let p = aug.probability();
    if !(0.0..1.0).contains(&p) {
        return invalid(format!("augmentation probability {p} outside [0, 1)"));
    }
    view.validate()?;
    if p == 0.0 {
        return Ok(view.clone());
    }
    Ok(match aug {
        Augmentation::NodeDrop(_) => node_drop(view, p, rng),
        Augmentation::EdgePerturb(_) => edge_perturb(view, p, rng),
        Augmentation::AttrMask(_) => {
            let mut out = view.clone();
            for m in out.masked.iter_mut() {
                if rng.random_bool(p) {
                    *m = true;
                }
            }
            out
        }
    })
}

fn node_drop<R: Rng + ?Sized>(view: &SubgraphView, p: f64, rng: &mut R) -> SubgraphView {
    let n = view.node_ids.len();
    let mut keep: Vec<bool> = (0..n).map(|_| !rng.random_bool(p)).collect();
    if n > 0 && !keep.iter().any(|&k| k) {
        keep[rng.random_range(0..n)] = true;
    }
    let kept: HashSet<NodeId> = view
        .node_ids
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(&v, _)| v)
        .collect();
    let mut out = SubgraphView {
        node_ids: Vec::with_capacity(kept.len()),
        edges: Vec::new(),
        masked: Vec::with_capacity(kept.len()),
    };
    for (i, &v) in view.node_ids.iter().enumerate() {
        if keep[i] {
            out.node_ids.push(v);
            out.masked.push(view.masked[i]);
        }
    }
    out.edges = view
        .edges
        .iter()
        .copied()
        .filter(|(u, v)| kept.contains(u) && kept.contains(v))
        .collect();
    out
}

/// Removes each edge with probability `p`, then makes one attempt per
/// original edge to add, with probability `p`, a uniformly drawn pair that
/// was not an edge of the input.
fn edge_perturb<R: Rng + ?Sized>(view: &SubgraphView, p: f64, rng: &mut R) -> SubgraphView {
    let n = view.node_ids.len();
    let original: HashSet<Edge> = view.edges.iter().copied().collect();
    let mut edges: Vec<Edge> = view
        .edges
        .iter()
        .copied()
        .filter(|_| !rng.random_bool(p))
        .collect();
    let mut free = (n * n.saturating_sub(1)).saturating_sub(original.len());
    let mut added = HashSet::new();
    for _ in 0..view.edges.len() {
        if free == 0 || !rng.random_bool(p) {
            continue;
        }
        loop {
            let a = view.node_ids[rng.random_range(0..n)];
            let b = view.node_ids[rng.random_range(0..n)];
            if a != b && !original.contains(&(a, b)) && added.insert((a, b)) {
                edges.push((a, b));
                free -= 1;
                break;
            }
        }
    }
    SubgraphView {
        node_ids: view.node_ids.clone(),
        edges,
        masked: view.masked.clone(),
    }
}
