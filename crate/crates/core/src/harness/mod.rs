//! Experiment harness: configuration, training, evaluation, statistics,
//! sweeps and run manifests.

mod config;
mod manifest;
mod stats;
mod sweep;
mod train;
mod verify;

pub use config::{parse_seeds, DataSource, RunConfig, OUTPUT_ROOT_ENV};
pub use manifest::RunManifest;
pub use stats::{mean, sample_std, welch_t_test, TTest};
pub use sweep::{
    read_rows_csv, sweep_lambda, sweep_observed, SummaryRow, SweepRow, SweepTable, ROW_COLUMNS,
};
pub use train::{
    build_model, evaluate, predict, train, train_models, train_on, train_seed, EpochTrace,
    MetricsRecord, SeedResult, TrainedModel,
};
pub use verify::{run_verify, CheckResult, MODEL_KINDS};
