use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::protocol::{sample_observed, ObservationProtocol, Stage};
use crate::autodiff::Matrix;
use crate::error::{invalid, Result};
use crate::graph::{GlobalGraph, NodeId, SubgraphRecord};

/// A global graph with its labeled subgraphs and split assignment.
#[derive(Clone, Debug)]
pub struct DatasetBundle {
    pub name: String,
    pub graph: GlobalGraph,
    pub records: Vec<SubgraphRecord>,
    pub num_classes: usize,
    /// One entry per record.
    pub splits: Vec<Stage>,
    /// Pre-computed node features, one row per global node.
    pub features: Option<Matrix>,
    /// Records carry an observation order that protocols should follow.
    pub ordered: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_subgraphs: usize,
    pub num_classes: usize,
    pub num_nodes: usize,
    /// Undirected edge count when the edge list is symmetric.
    pub num_edges: usize,
    pub density: f64,
    pub mean_nodes: f64,
    pub std_nodes: f64,
    pub mean_edges: f64,
}

/// Published statistics of a benchmark dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpectedStats {
    pub name: &'static str,
    pub num_subgraphs: usize,
    pub num_classes: usize,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub mean_nodes: f64,
    pub mean_edges: f64,
}

pub const EXPECTED_STATS: [ExpectedStats; 3] = [
    ExpectedStats {
        name: "hpo-metab",
        num_subgraphs: 2397,
        num_classes: 6,
        num_nodes: 14_587,
        num_edges: 3_238_174,
        mean_nodes: 14.4,
        mean_edges: 181.3,
    },
    ExpectedStats {
        name: "em-user",
        num_subgraphs: 319,
        num_classes: 2,
        num_nodes: 57_333,
        num_edges: 4_573_417,
        mean_nodes: 155.4,
        mean_edges: 534.9,
    },
    ExpectedStats {
        name: "fntn",
        num_subgraphs: 1107,
        num_classes: 4,
        num_nodes: 362_232,
        num_edges: 22_918_295,
        mean_nodes: 408.6,
        mean_edges: 412.9,
    },
];

pub fn expected_stats(name: &str) -> Option<ExpectedStats> {
    let key = name.to_ascii_lowercase().replace('_', "-");
    EXPECTED_STATS.iter().copied().find(|e| e.name == key)
}

impl ExpectedStats {
    /// Counts must match exactly and the mean subgraph size must round to the
    /// published one-decimal value. Edge figures are reported, not checked.
    pub fn check(&self, stats: &DatasetStats) -> Result<()> {
        let mut problems = Vec::new();
        if stats.num_subgraphs != self.num_subgraphs {
            problems.push(format!(
                "{} subgraphs, expected {}",
                stats.num_subgraphs, self.num_subgraphs
            ));
        }
        if stats.num_classes != self.num_classes {
            problems.push(format!(
                "{} classes, expected {}",
                stats.num_classes, self.num_classes
            ));
        }
        if stats.num_nodes != self.num_nodes {
            problems.push(format!(
                "{} global nodes, expected {}",
                stats.num_nodes, self.num_nodes
            ));
        }
        if (stats.mean_nodes - self.mean_nodes).abs() > 0.05 {
            problems.push(format!(
                "mean size {:.2}, expected {}",
                stats.mean_nodes, self.mean_nodes
            ));
        }
        if stats.num_edges != self.num_edges {
            log::info!(
                "{}: {} global edges (published {})",
                self.name,
                stats.num_edges,
                self.num_edges
            );
        }
        if problems.is_empty() {
            Ok(())
        } else {
            invalid(format!(
                "{} statistics differ: {}",
                self.name,
                problems.join("; ")
            ))
        }
    }
}

/// Seeded shuffle, then contiguous train/val/test cuts. Sizes are
/// `round(ratio * n)` for train and val; test takes the rest.
pub fn make_splits(num_records: usize, ratios: (f64, f64, f64), seed: u64) -> Result<Vec<Stage>> {
    let (tr, va, te) = ratios;
    if [tr, va, te].iter().any(|&r| r < 0.0 || !r.is_finite()) {
        return invalid(format!("split ratios {ratios:?} must be >= 0"));
    }
    if (tr + va + te - 1.0).abs() > 1e-9 {
        return invalid(format!("split ratios {ratios:?} must sum to 1"));
    }
    let mut order: Vec<usize> = (0..num_records).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((tr * num_records as f64).round() as usize).min(num_records);
    let n_val = ((va * num_records as f64).round() as usize).min(num_records - n_train);
    let mut splits = vec![Stage::Test; num_records];
    for (pos, &r) in order.iter().enumerate() {
        splits[r] = if pos < n_train {
            Stage::Train
        } else if pos < n_train + n_val {
            Stage::Val
        } else {
            Stage::Test
        };
    }
    Ok(splits)
}

impl DatasetBundle {
    pub fn indices(&self, stage: Stage) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&i| self.splits[i] == stage)
            .collect()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.features.as_ref().map(Matrix::cols)
    }

    pub fn subgraph_feature_dim(&self) -> Option<usize> {
        self.records
            .first()
            .and_then(|r| r.subgraph_feature.as_ref().map(Vec::len))
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.len() != self.splits.len() {
            return invalid(format!(
                "{} records but {} split entries",
                self.records.len(),
                self.splits.len()
            ));
        }
        if self.num_classes < 2 {
            return invalid("need at least 2 classes");
        }
        let g_dim = self.subgraph_feature_dim();
        for (i, r) in self.records.iter().enumerate() {
            r.validate(&self.graph)
                .map_err(|e| crate::error::PsiError::InvalidArgument(format!("record {i}: {e}")))?;
            if r.len() < 2 {
                return invalid(format!("record {i} has fewer than 2 nodes"));
            }
            if r.label >= self.num_classes {
                return invalid(format!(
                    "record {i} label {} >= {} classes",
                    r.label, self.num_classes
                ));
            }
            if r.subgraph_feature.as_ref().map(Vec::len) != g_dim {
                return invalid(format!("record {i} subgraph feature width differs"));
            }
            if self.ordered && r.observation_order.is_none() {
                return invalid(format!(
                    "ordered dataset but record {i} has no observation order"
                ));
            }
        }
        if let Some(f) = &self.features {
            if f.rows() != self.graph.num_nodes() {
                return invalid(format!(
                    "{} feature rows for {} nodes",
                    f.rows(),
                    self.graph.num_nodes()
                ));
            }
        }
        Ok(())
    }

    pub fn stats(&self) -> DatasetStats {
        let n = self.records.len();
        let sizes: Vec<f64> = self.records.iter().map(|r| r.len() as f64).collect();
        let mean_nodes = if n == 0 {
            0.0
        } else {
            sizes.iter().sum::<f64>() / n as f64
        };
        let std_nodes = if n < 2 {
            0.0
        } else {
            (sizes.iter().map(|s| (s - mean_nodes).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        let symmetric = self
            .graph
            .edges()
            .iter()
            .all(|&(u, v)| self.graph.has_edge(v, u));
        let edge_count = |edges: &[(NodeId, NodeId)]| {
            if symmetric {
                edges.iter().filter(|(u, v)| u <= v).count()
            } else {
                edges.len()
            }
        };
        let mean_edges = if n == 0 {
            0.0
        } else {
            self.records
                .iter()
                .map(|r| edge_count(&r.edges) as f64)
                .sum::<f64>()
                / n as f64
        };
        DatasetStats {
            num_subgraphs: n,
            num_classes: self.num_classes,
            num_nodes: self.graph.num_nodes(),
            num_edges: edge_count(self.graph.edges()),
            density: self.graph.density(),
            mean_nodes,
            std_nodes,
            mean_edges,
        }
    }

    /// Frozen evaluation observation of every record in `stage`.
    pub fn frozen_observations(
        &self,
        protocol: &ObservationProtocol,
        stage: Stage,
    ) -> Result<Vec<(usize, Vec<NodeId>)>> {
        if stage == Stage::Train {
            return invalid("training observations are resampled, not frozen");
        }
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        self.indices(stage)
            .into_iter()
            .map(|i| {
                Ok((
                    i,
                    sample_observed(&self.records[i], i, protocol, stage, &mut unused)?,
                ))
            })
            .collect()
    }

    /// Fraction of `stage` records in the most common class there.
    pub fn majority_rate(&self, stage: Stage) -> f64 {
        let idx = self.indices(stage);
        if idx.is_empty() {
            return 0.0;
        }
        let mut counts = vec![0usize; self.num_classes];
        for &i in &idx {
            counts[self.records[i].label] += 1;
        }
        *counts.iter().max().unwrap() as f64 / idx.len() as f64
    }
}
