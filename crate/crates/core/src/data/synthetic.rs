//! Planted-community benchmark: subgraphs are random walks that mostly stay
//! inside one community of a stochastic block model.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::bundle::{make_splits, DatasetBundle};
use crate::autodiff::Matrix;
use crate::error::{invalid, Result};
use crate::graph::{GlobalGraph, NodeId, SubgraphRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_nodes: usize,
    pub num_communities: usize,
    pub num_classes: usize,
    pub num_subgraphs: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub min_size: usize,
    pub max_size: usize,
    /// Probability that a walk step prefers a same-community neighbor.
    pub stay_prob: f64,
    /// Standard deviation of the Gaussian noise added to features.
    pub feature_noise: f64,
    /// Feature width; the first `num_communities` columns carry the one-hot
    /// community indicator.
    pub feature_dim: usize,
    pub split_ratios: (f64, f64, f64),
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_nodes: 300,
            num_communities: 10,
            num_classes: 2,
            num_subgraphs: 100,
            p_in: 0.3,
            p_out: 0.01,
            min_size: 10,
            max_size: 20,
            stay_prob: 0.9,
            feature_noise: 1.0,
            feature_dim: 16,
            split_ratios: (0.7, 0.15, 0.15),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_communities == 0 || self.num_communities > self.num_nodes {
            return invalid("need between 1 and num_nodes communities");
        }
        if self.num_classes < 2 || self.num_classes > self.num_communities {
            return invalid("need 2 <= num_classes <= num_communities");
        }
        if self.min_size < 2 || self.min_size > self.max_size {
            return invalid(format!(
                "bad subgraph size range {}..={}",
                self.min_size, self.max_size
            ));
        }
        let smallest = self.num_nodes / self.num_communities;
        if self.max_size > self.num_nodes || self.max_size > smallest {
            return invalid(format!(
                "subgraph size {} exceeds the smallest community of {smallest} nodes",
                self.max_size
            ));
        }
        for (name, p) in [
            ("p_in", self.p_in),
            ("p_out", self.p_out),
            ("stay_prob", self.stay_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if self.feature_noise < 0.0 || self.feature_dim < self.num_communities {
            return invalid(
                "feature_dim must cover the community indicator and noise must be >= 0",
            );
        }
        if self.num_subgraphs == 0 {
            return invalid("num_subgraphs must be >= 1");
        }
        Ok(())
    }

    /// Smallest record size that still leaves room for `n_obs` observed
    /// nodes plus two unobserved ones.
    pub fn with_min_size_for(mut self, n_obs: usize) -> Self {
        self.min_size = self.min_size.max(n_obs + 2);
        self.max_size = self.max_size.max(self.min_size);
        self
    }

    pub fn community_of(&self, v: NodeId) -> usize {
        v * self.num_communities / self.num_nodes
    }

    pub fn class_of_community(&self, c: usize) -> usize {
        c % self.num_classes
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<DatasetBundle> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.num_nodes;
    let community: Vec<usize> = (0..n).map(|v| spec.community_of(v)).collect();

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if community[u] == community[v] {
                spec.p_in
            } else {
                spec.p_out
            };
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let graph = GlobalGraph::new(n, edges, true)?;

    let noise = Normal::new(0.0, spec.feature_noise.max(f64::MIN_POSITIVE))
        .map_err(|e| crate::error::PsiError::InvalidArgument(e.to_string()))?;
    let mut features = Matrix::zeros(n, spec.feature_dim);
    for v in 0..n {
        for j in 0..spec.feature_dim {
            let base = if j == community[v] { 1.0 } else { 0.0 };
            let eps = if spec.feature_noise > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            features.set(v, j, base + eps);
        }
    }

    let members: Vec<Vec<NodeId>> = (0..spec.num_communities)
        .map(|c| (0..n).filter(|&v| community[v] == c).collect())
        .collect();
    let mut records = Vec::with_capacity(spec.num_subgraphs);
    for _ in 0..spec.num_subgraphs {
        let home = rng.random_range(0..spec.num_communities);
        let size = rng.random_range(spec.min_size..=spec.max_size);
        let walk = random_walk(
            &graph,
            &community,
            &members[home],
            home,
            size,
            spec.stay_prob,
            &mut rng,
        );
        let label = majority_class(spec, &walk, &community);
        let mut record = SubgraphRecord::induced(&graph, walk.clone(), label);
        record.observation_order = Some(walk);
        records.push(record);
    }
    let splits = make_splits(records.len(), spec.split_ratios, spec.seed)?;
    let bundle = DatasetBundle {
        name: "synthetic".into(),
        graph,
        records,
        num_classes: spec.num_classes,
        splits,
        features: Some(features),
        ordered: false,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Distinct nodes in visit order. Restarts from a visited node or, if the
/// walk is stuck, from a fresh node of the home community.
fn random_walk<R: Rng + ?Sized>(
    graph: &GlobalGraph,
    community: &[usize],
    home_members: &[NodeId],
    home: usize,
    size: usize,
    stay_prob: f64,
    rng: &mut R,
) -> Vec<NodeId> {
    let mut visited = vec![home_members[rng.random_range(0..home_members.len())]];
    let mut seen: HashSet<NodeId> = visited.iter().copied().collect();
    let mut current = visited[0];
    let mut stalled = 0;
    while visited.len() < size {
        let neighbors = graph.out_neighbors(current);
        let same: Vec<NodeId> = neighbors
            .iter()
            .copied()
            .filter(|&u| community[u] == home)
            .collect();
        let next = if !same.is_empty() && rng.random_bool(stay_prob) {
            Some(same[rng.random_range(0..same.len())])
        } else if !neighbors.is_empty() {
            Some(neighbors[rng.random_range(0..neighbors.len())])
        } else {
            None
        };
        match next {
            Some(u) if seen.insert(u) => {
                visited.push(u);
                current = u;
                stalled = 0;
            }
            Some(u) => {
                current = u;
                stalled += 1;
            }
            None => stalled += 100,
        }
        if stalled > 50 {
            let fresh: Vec<NodeId> = home_members
                .iter()
                .copied()
                .filter(|v| !seen.contains(v))
                .collect();
            current = if fresh.is_empty() || rng.random_bool(0.5) {
                visited[rng.random_range(0..visited.len())]
            } else {
                let v = fresh[rng.random_range(0..fresh.len())];
                seen.insert(v);
                visited.push(v);
                v
            };
            stalled = 0;
        }
    }
    visited
}

/// Class of the most common community among `nodes`; ties go to the lower
/// community id.
fn majority_class(spec: &SyntheticSpec, nodes: &[NodeId], community: &[usize]) -> usize {
    let mut counts = vec![0usize; spec.num_communities];
    for &v in nodes {
        counts[community[v]] += 1;
    }
    let best = (0..spec.num_communities)
        .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    spec.class_of_community(best)
}
