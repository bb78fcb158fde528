//! Observation protocols: which nodes of a subgraph are seen.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::{NodeId, SubgraphRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Train,
    Val,
    Test,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Train => "train",
            Stage::Val => "val",
            Stage::Test => "test",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = crate::error::PsiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Stage::Train),
            "val" | "valid" | "validation" => Ok(Stage::Val),
            "test" => Ok(Stage::Test),
            other => invalid(format!("unknown split '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationProtocol {
    pub n_obs: usize,
    /// Observe a prefix of each record's observation order.
    pub ordered: bool,
    /// Draw training sizes from `n_obs - 2 ..= n_obs + 2`.
    pub train_jitter: bool,
    pub eval_fixed_seed: u64,
}

impl Default for ObservationProtocol {
    fn default() -> Self {
        Self {
            n_obs: 8,
            ordered: false,
            train_jitter: true,
            eval_fixed_seed: 0,
        }
    }
}

impl ObservationProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.n_obs == 0 {
            return invalid("n_obs must be >= 1");
        }
        Ok(())
    }

    /// Rng that fixes the evaluation observation of one record.
    pub fn eval_rng(&self, record_index: usize) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&self.eval_fixed_seed.to_le_bytes());
        seed[8..16].copy_from_slice(&(record_index as u64).to_le_bytes());
        seed[16..24].copy_from_slice(&(self.n_obs as u64).to_le_bytes());
        ChaCha8Rng::from_seed(seed)
    }

    fn target_size<R: Rng + ?Sized>(&self, stage: Stage, rng: &mut R) -> usize {
        if stage == Stage::Train && self.train_jitter {
            let low = self.n_obs as i64 - 2;
            (low + rng.random_range(0..5_i64)).max(1) as usize
        } else {
            self.n_obs
        }
    }
}

/// Observed node ids, in observation order. Evaluation stages ignore `rng`
/// and draw from the protocol's frozen per-record stream; training draws a
/// fresh observation on every call.
pub fn sample_observed<R: Rng + ?Sized>(
    record: &SubgraphRecord,
    record_index: usize,
    protocol: &ObservationProtocol,
    stage: Stage,
    rng: &mut R,
) -> Result<Vec<NodeId>> {
    protocol.validate()?;
    if record.is_empty() {
        return invalid(format!("record {record_index} has no nodes"));
    }
    if protocol.ordered && record.observation_order.is_none() {
        return invalid(format!(
            "ordered protocol but record {record_index} has no observation order"
        ));
    }
    match stage {
        Stage::Train => draw(record, protocol, stage, rng),
        Stage::Val | Stage::Test => draw(
            record,
            protocol,
            stage,
            &mut protocol.eval_rng(record_index),
        ),
    }
}

fn draw<R: Rng + ?Sized>(
    record: &SubgraphRecord,
    protocol: &ObservationProtocol,
    stage: Stage,
    rng: &mut R,
) -> Result<Vec<NodeId>> {
    let size = protocol.target_size(stage, rng).clamp(1, record.len());
    if let (true, Some(order)) = (protocol.ordered, &record.observation_order) {
        return Ok(order[..size].to_vec());
    }
    Ok(sample(rng, record.len(), size)
        .into_iter()
        .map(|i| record.node_ids[i])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn record(n: usize) -> SubgraphRecord {
        SubgraphRecord {
            node_ids: (0..n).collect(),
            edges: vec![],
            label: 0,
            subgraph_feature: None,
            observation_order: Some((0..n).rev().collect()),
        }
    }

    #[test]
    fn ordered_prefix() {
        let r = SubgraphRecord {
            observation_order: Some(vec![4, 2, 0, 1, 3]),
            ..record(5)
        };
        let p = ObservationProtocol {
            n_obs: 3,
            ordered: true,
            train_jitter: false,
            eval_fixed_seed: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for stage in [Stage::Train, Stage::Val, Stage::Test] {
            assert_eq!(
                sample_observed(&r, 0, &p, stage, &mut rng).unwrap(),
                vec![4, 2, 0]
            );
        }
        let unordered = SubgraphRecord {
            observation_order: None,
            ..record(5)
        };
        assert!(sample_observed(&unordered, 0, &p, Stage::Train, &mut rng).is_err());
    }

    #[test]
    fn eval_sets_are_frozen() {
        let r = record(30);
        let p = ObservationProtocol {
            n_obs: 5,
            ..ObservationProtocol::default()
        };
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(2);
        let x = sample_observed(&r, 7, &p, Stage::Val, &mut a).unwrap();
        assert_eq!(x, sample_observed(&r, 7, &p, Stage::Val, &mut b).unwrap());
        assert_eq!(x.len(), 5);
        assert_ne!(x, sample_observed(&r, 8, &p, Stage::Val, &mut b).unwrap());
    }

    #[test]
    fn train_jitter_and_resampling() {
        let r = record(40);
        let p = ObservationProtocol {
            n_obs: 8,
            ..ObservationProtocol::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut sizes = HashSet::new();
        let mut sets = HashSet::new();
        for _ in 0..1000 {
            let obs = sample_observed(&r, 0, &p, Stage::Train, &mut rng).unwrap();
            let unique: HashSet<_> = obs.iter().collect();
            assert_eq!(unique.len(), obs.len());
            sizes.insert(obs.len());
            sets.insert(obs);
        }
        assert_eq!(sizes, (6..=10).collect());
        assert!(sets.len() > 2);
    }

    #[test]
    fn sizes_clamp_to_record() {
        let r = record(3);
        let p = ObservationProtocol {
            n_obs: 8,
            ..ObservationProtocol::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(
            sample_observed(&r, 0, &p, Stage::Test, &mut rng)
                .unwrap()
                .len(),
            3
        );
        let p = ObservationProtocol {
            n_obs: 1,
            ..ObservationProtocol::default()
        };
        for _ in 0..50 {
            assert!(!sample_observed(&r, 0, &p, Stage::Train, &mut rng)
                .unwrap()
                .is_empty());
        }
    }
}
