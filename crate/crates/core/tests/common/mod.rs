#![allow(dead_code)]

use psi_core::autodiff::ParameterStore;
use psi_core::graph::{GlobalGraph, SubgraphRecord};
use psi_core::models::{BatchItem, ModelConfig, ModelKind, PsiModel};
use psi_core::nn::EmbeddingTable;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const ALL_KINDS: [&str; 8] = [
    "baseline",
    "ps-dgi",
    "ps-infograph",
    "ps-mvgrl",
    "ps-graphcl",
    "khop",
    "khop+ps-dgi",
    "khop+ps-infograph",
];

pub struct Toy {
    pub graph: GlobalGraph,
    pub records: Vec<SubgraphRecord>,
    pub items: Vec<BatchItem>,
}

/// Ten nodes in three labeled groups with a few cross edges.
pub fn toy() -> Toy {
    let edges = [
        (0, 1),
        (1, 2),
        (2, 0),
        (2, 3),
        (3, 4),
        (4, 5),
        (5, 6),
        (6, 4),
        (6, 7),
        (7, 8),
        (8, 9),
        (9, 7),
        (1, 5),
        (3, 8),
    ];
    let graph = GlobalGraph::new(10, edges, true).unwrap();
    let records = vec![
        SubgraphRecord::induced(&graph, vec![0, 1, 2, 3], 0),
        SubgraphRecord::induced(&graph, vec![4, 5, 6], 1),
        SubgraphRecord::induced(&graph, vec![7, 8, 9], 0),
    ];
    let items = vec![
        BatchItem {
            record_index: 0,
            observed: vec![0, 2],
        },
        BatchItem {
            record_index: 1,
            observed: vec![5, 4],
        },
        BatchItem {
            record_index: 2,
            observed: vec![9, 7],
        },
    ];
    Toy {
        graph,
        records,
        items,
    }
}

pub fn small_config(kind: &str) -> ModelConfig {
    let kind: ModelKind = kind.parse().unwrap();
    let mut cfg = ModelConfig::for_kind(kind);
    cfg.hidden_dim = 4;
    cfg.dropout = 0.0;
    cfg.pool_ratio = 0.5;
    cfg
}

pub fn build(cfg: ModelConfig, in_dim: usize, seed: u64) -> (ParameterStore, PsiModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    let table = EmbeddingTable::random(&mut store, 10, in_dim, &mut rng).unwrap();
    let model = PsiModel::new(&mut store, cfg, table, 2, None, &mut rng).unwrap();
    (store, model)
}
