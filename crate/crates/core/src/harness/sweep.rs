//! Observed-size and loss-weight grids with CSV output.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::stats::{mean, sample_std};
use super::train::{evaluate, train_seed};
use crate::data::{DatasetBundle, Stage};
use crate::error::{invalid, Result};

/// One accuracy measurement, in long format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dataset: String,
    pub model: String,
    pub seed: u64,
    pub n_obs_train: usize,
    pub n_obs_test: usize,
    pub lambda_khop: f64,
    pub lambda_second: f64,
    pub split: String,
    pub accuracy: f64,
}

/// Mean and sample standard deviation over seeds for one grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub model: String,
    pub n_obs_train: usize,
    pub n_obs_test: usize,
    pub lambda_khop: f64,
    pub lambda_second: f64,
    pub split: String,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SummaryRow>,
}

pub const ROW_COLUMNS: [&str; 9] = [
    "dataset",
    "model",
    "seed",
    "n_obs_train",
    "n_obs_test",
    "lambda_khop",
    "lambda_second",
    "split",
    "accuracy",
];

impl SweepTable {
    fn summarize(rows: Vec<SweepRow>) -> Self {
        let mut summary: Vec<SummaryRow> = Vec::new();
        let mut values: Vec<Vec<f64>> = Vec::new();
        for r in &rows {
            let pos = summary.iter().position(|s| {
                (
                    s.n_obs_train,
                    s.n_obs_test,
                    s.lambda_khop,
                    s.lambda_second,
                    &s.split,
                    &s.model,
                ) == (
                    r.n_obs_train,
                    r.n_obs_test,
                    r.lambda_khop,
                    r.lambda_second,
                    &r.split,
                    &r.model,
                )
            });
            let i = pos.unwrap_or_else(|| {
                summary.push(SummaryRow {
                    dataset: r.dataset.clone(),
                    model: r.model.clone(),
                    n_obs_train: r.n_obs_train,
                    n_obs_test: r.n_obs_test,
                    lambda_khop: r.lambda_khop,
                    lambda_second: r.lambda_second,
                    split: r.split.clone(),
                    mean: 0.0,
                    std: 0.0,
                    runs: 0,
                });
                values.push(Vec::new());
                summary.len() - 1
            });
            values[i].push(r.accuracy);
        }
        for (s, v) in summary.iter_mut().zip(&values) {
            s.mean = mean(v);
            s.std = sample_std(v);
            s.runs = v.len();
        }
        Self { rows, summary }
    }

    pub fn write_rows_csv(&self, path: &Path) -> Result<()> {
        write_csv(path, &self.rows, &ROW_COLUMNS)
    }

    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        write_csv(path, &self.summary, &[])
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() && !header.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != ROW_COLUMNS {
        return invalid(format!("unexpected columns {header:?}"));
    }
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

fn largest_record(bundle: &DatasetBundle) -> usize {
    bundle.records.iter().map(|r| r.len()).max().unwrap_or(0)
}

/// Trains at every size in `sizes` and tests each model at every size.
/// Sizes above the largest record are clamped to it.
pub fn sweep_observed(
    run: &RunConfig,
    bundle: &DatasetBundle,
    sizes: &[usize],
) -> Result<SweepTable> {
    if sizes.is_empty() {
        return invalid("sweep_observed needs at least one size");
    }
    let largest = largest_record(bundle);
    let clamp = |n: usize| {
        if n > largest {
            log::warn!("observed size {n} exceeds every subgraph; clamped to {largest}");
        }
        n.clamp(1, largest.max(1))
    };
    let model = run.model.kind.to_string();
    let mut rows = Vec::new();
    for &train_size in sizes {
        let mut cfg = run.clone();
        cfg.protocol.n_obs = clamp(train_size);
        for &seed in &run.seeds {
            let (res, trained) = train_seed(&cfg, bundle, seed)?;
            if let Some(msg) = &res.diverged {
                log::warn!("seed {seed} diverged, omitted from sweep: {msg}");
                continue;
            }
            for &test_size in sizes {
                let mut protocol = cfg.protocol;
                protocol.n_obs = clamp(test_size);
                rows.push(SweepRow {
                    dataset: bundle.name.clone(),
                    model: model.clone(),
                    seed,
                    n_obs_train: train_size,
                    n_obs_test: test_size,
                    lambda_khop: run.model.weights.lambda_khop,
                    lambda_second: run.model.weights.lambda_second,
                    split: Stage::Test.name().into(),
                    accuracy: evaluate(&trained, bundle, &protocol, Stage::Test)?,
                });
            }
        }
    }
    Ok(SweepTable::summarize(rows))
}

/// Trains at every `(lambda_khop, lambda_second)` pair.
pub fn sweep_lambda(
    run: &RunConfig,
    bundle: &DatasetBundle,
    khop_grid: &[f64],
    second_grid: &[f64],
) -> Result<SweepTable> {
    if khop_grid.is_empty() || second_grid.is_empty() {
        return invalid("sweep_lambda needs nonempty grids");
    }
    let model = run.model.kind.to_string();
    let mut rows = Vec::new();
    for &lk in khop_grid {
        for &l2 in second_grid {
            let mut cfg = run.clone();
            cfg.model.weights.lambda_khop = lk;
            cfg.model.weights.lambda_second = l2;
            for &seed in &run.seeds {
                let (res, _) = train_seed(&cfg, bundle, seed)?;
                let Some(accuracy) = res.test_accuracy else {
                    log::warn!("seed {seed} at ({lk}, {l2}) has no test accuracy");
                    continue;
                };
                rows.push(SweepRow {
                    dataset: bundle.name.clone(),
                    model: model.clone(),
                    seed,
                    n_obs_train: run.protocol.n_obs,
                    n_obs_test: run.protocol.n_obs,
                    lambda_khop: lk,
                    lambda_second: l2,
                    split: Stage::Test.name().into(),
                    accuracy,
                });
            }
        }
    }
    Ok(SweepTable::summarize(rows))
}
