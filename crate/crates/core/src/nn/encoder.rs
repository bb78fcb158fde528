//! Two-layer GraphSAGE with mean aggregation and skip connections.

use std::collections::HashMap;

use rand::Rng;

use super::layers::Linear;
use crate::autodiff::{ParameterStore, Segment, Tape, Var};
use crate::error::{invalid, Result};
use crate::graph::{Edge, NodeId};

/// Message-passing structure over locally indexed nodes.
#[derive(Clone, Debug)]
pub struct LocalGraph {
    num_nodes: usize,
    incoming: Vec<Segment>,
    outgoing: Vec<Segment>,
}

impl LocalGraph {
    /// Re-indexes global edges onto positions in `node_ids`.
    pub fn new(node_ids: &[NodeId], edges: &[Edge]) -> Result<Self> {
        let weighted: Vec<_> = edges.iter().map(|&(u, v)| (u, v, 1.0)).collect();
        Self::weighted(node_ids, &weighted)
    }

    pub fn weighted(node_ids: &[NodeId], edges: &[(NodeId, NodeId, f64)]) -> Result<Self> {
        let pos: HashMap<NodeId, usize> =
            node_ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        if pos.len() != node_ids.len() {
            return invalid("duplicate node id in local graph");
        }
        let mut local = Vec::with_capacity(edges.len());
        for &(u, v, w) in edges {
            match (pos.get(&u), pos.get(&v)) {
                (Some(&a), Some(&b)) => local.push((a, b, w)),
                _ => {
                    return invalid(format!(
                        "edge ({u}, {v}) references a node outside the node list"
                    ))
                }
            }
        }
        Ok(Self::from_local(node_ids.len(), &local))
    }

    /// Edges already expressed as local indices.
    pub fn from_local(num_nodes: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut incoming = vec![Vec::new(); num_nodes];
        let mut outgoing = vec![Vec::new(); num_nodes];
        for &(a, b, w) in edges {
            incoming[b].push((a, w));
            outgoing[a].push((b, w));
        }
        Self {
            num_nodes,
            incoming,
            outgoing,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    fn segments(&self, direction: Direction) -> Vec<Segment> {
        match direction {
            Direction::Incoming => self.incoming.clone(),
            Direction::Outgoing => self.outgoing.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Aggregate over sources of edges pointing at the node.
    Incoming,
    /// Aggregate over targets of the node's edges.
    Outgoing,
}

#[derive(Clone, Debug)]
enum Skip {
    None,
    Identity,
    Project(Linear),
}

#[derive(Clone, Debug)]
pub struct SageLayer {
    pub self_lin: Linear,
    pub neigh_lin: Linear,
    skip: Skip,
}

impl SageLayer {
    /// `relu(h W_self + b + mean_neigh(h) W_neigh) + skip(h)`
    fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        h: Var,
        segments: Vec<Segment>,
    ) -> Result<Var> {
        let agg = tape.segment_mean(h, segments)?;
        let own = self.self_lin.forward(tape, store, h)?;
        let neigh = self.neigh_lin.forward(tape, store, agg)?;
        let z = tape.add(own, neigh)?;
        let z = tape.relu(z);
        match &self.skip {
            Skip::None => Ok(z),
            Skip::Identity => tape.add(z, h),
            Skip::Project(p) => {
                let s = p.forward(tape, store, h)?;
                tape.add(z, s)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SageConfig {
    pub in_dim: usize,
    pub hidden: usize,
    pub skip: bool,
    /// Split `hidden` in half: one branch per edge direction.
    pub bidirectional: bool,
    pub dropout: f64,
}

#[derive(Clone, Debug)]
pub struct SageEncoder {
    branches: Vec<(Direction, [SageLayer; 2])>,
    out_dim: usize,
    dropout: f64,
}

impl SageEncoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        cfg: &SageConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if cfg.bidirectional && cfg.hidden % 2 != 0 {
            return invalid("bidirectional encoder needs an even hidden width");
        }
        let plan: &[Direction] = if cfg.bidirectional {
            &[Direction::Incoming, Direction::Outgoing]
        } else {
            &[Direction::Incoming]
        };
        let width = cfg.hidden / plan.len();
        let mut branches = Vec::new();
        for (b, &dir) in plan.iter().enumerate() {
            let prefix = format!("{name}.b{b}");
            let mut layer = |l: usize, in_dim: usize, rng: &mut R| -> Result<SageLayer> {
                let p = format!("{prefix}.l{l}");
                let skip = match (cfg.skip, in_dim == width) {
                    (false, _) => Skip::None,
                    (true, true) => Skip::Identity,
                    (true, false) => Skip::Project(Linear::new(
                        store,
                        &format!("{p}.skip"),
                        in_dim,
                        width,
                        false,
                        rng,
                    )?),
                };
                Ok(SageLayer {
                    self_lin: Linear::new(store, &format!("{p}.self"), in_dim, width, true, rng)?,
                    neigh_lin: Linear::new(
                        store,
                        &format!("{p}.neigh"),
                        in_dim,
                        width,
                        false,
                        rng,
                    )?,
                    skip,
                })
            };
            let first = layer(0, cfg.in_dim, rng)?;
            let second = layer(1, width, rng)?;
            branches.push((dir, [first, second]));
        }
        Ok(Self {
            branches,
            out_dim: cfg.hidden,
            dropout: cfg.dropout,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn layers(&self, branch: usize) -> &[SageLayer; 2] {
        &self.branches[branch].1
    }

    /// Node representations for `x` (one row per local node).
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        x: Var,
        graph: &LocalGraph,
        rng: &mut R,
    ) -> Result<Var> {
        if tape.shape(x).0 != graph.num_nodes() {
            return invalid(format!(
                "feature rows {} do not match graph size {}",
                tape.shape(x).0,
                graph.num_nodes()
            ));
        }
        let mut outs = Vec::with_capacity(self.branches.len());
        for (dir, layers) in &self.branches {
            let h = layers[0].forward(tape, store, x, graph.segments(*dir))?;
            let h = tape.dropout(h, self.dropout, rng)?;
            let h = layers[1].forward(tape, store, h, graph.segments(*dir))?;
            outs.push(h);
        }
        if outs.len() == 1 {
            Ok(outs[0])
        } else {
            tape.concat_cols(&outs)
        }
    }
}
