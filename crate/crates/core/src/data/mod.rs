//! Observation protocols, dataset bundles, file loaders and the synthetic
//! benchmark generator.

mod bundle;
mod io;
mod protocol;
mod synthetic;

pub use bundle::{
    expected_stats, make_splits, DatasetBundle, DatasetStats, ExpectedStats, EXPECTED_STATS,
};
pub use io::{
    index_labels, load_dataset, read_bundle, read_edge_list, read_embeddings, read_splits,
    read_subgraphs, write_bundle, LoadOptions, RawSubgraph,
};
pub use protocol::{sample_observed, ObservationProtocol, Stage};
pub use synthetic::{generate_synthetic, SyntheticSpec};
