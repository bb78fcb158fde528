//! `psi`: command-line front end for the partial-subgraph harness.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use psi_core::data::{write_bundle, Stage};
use psi_core::harness::{
    build_model, evaluate, run_verify, sweep_lambda, sweep_observed, train_models, DataSource,
    MetricsRecord, RunConfig, RunManifest, SweepRow, SweepTable,
};

#[derive(Parser)]
#[command(name = "psi", version, about = "Partial-subgraph InfoMax experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override, e.g. `--set epochs=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (default: $PSI_OUTPUT_ROOT/<command> or runs/<command>).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        cfg.apply_overrides(&self.overrides)?;
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic benchmark bundle to disk.
    Generate(ConfigArgs),
    /// Train every seed and report test accuracy.
    Train(ConfigArgs),
    /// Score a saved checkpoint on one split.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Checkpoint written by `train`.
        #[arg(long)]
        params: PathBuf,
        /// Seed the checkpoint was trained with.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "test")]
        stage: String,
    },
    /// Train/test observed-size grid.
    SweepObserved {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [4usize, 8])]
        sizes: Vec<usize>,
    },
    /// Loss-weight grid for two-stage models.
    SweepLambda {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 3.0])]
        khop: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 3.0])]
        second: Vec<f64>,
    },
    /// Gradient checks, oracle equivalences and the conditional-GD bound.
    Verify,
}

fn write_manifest(
    dir: &Path,
    command: &str,
    cfg: &RunConfig,
    start: Instant,
    outputs: Vec<String>,
    results: serde_json::Value,
) -> Result<()> {
    let manifest = RunManifest::new(
        command,
        cfg,
        start.elapsed().as_secs_f64(),
        outputs,
        results,
    );
    manifest.write(&dir.join("manifest.json"))?;
    Ok(())
}

fn metric_rows(cfg: &RunConfig, m: &MetricsRecord) -> SweepTable {
    let rows = m
        .seeds
        .iter()
        .filter_map(|s| {
            Some(SweepRow {
                dataset: m.dataset.clone(),
                model: m.model.clone(),
                seed: s.seed,
                n_obs_train: cfg.protocol.n_obs,
                n_obs_test: cfg.protocol.n_obs,
                lambda_khop: cfg.model.weights.lambda_khop,
                lambda_second: cfg.model.weights.lambda_second,
                split: Stage::Test.name().into(),
                accuracy: s.test_accuracy?,
            })
        })
        .collect();
    SweepTable {
        rows,
        summary: vec![],
    }
}

fn write_traces(path: &Path, m: &MetricsRecord) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "seed",
        "epoch",
        "loss_graph",
        "loss_infomax",
        "loss_khop",
        "loss_second",
        "total",
        "val_accuracy",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in &m.seeds {
        for t in &s.traces {
            w.write_record([
                s.seed.to_string(),
                t.epoch.to_string(),
                t.loss_graph.to_string(),
                opt(t.loss_infomax),
                opt(t.loss_khop),
                opt(t.loss_second),
                t.total.to_string(),
                opt(t.val_accuracy),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn sweep_outputs(dir: &Path, table: &SweepTable) -> Result<Vec<String>> {
    table.write_rows_csv(&dir.join("rows.csv"))?;
    table.write_summary_csv(&dir.join("summary.csv"))?;
    for s in &table.summary {
        println!(
            "{} train={} test={} lambda=({}, {}): {:.4} +- {:.4}",
            s.model, s.n_obs_train, s.n_obs_test, s.lambda_khop, s.lambda_second, s.mean, s.std
        );
    }
    Ok(vec!["rows.csv".into(), "summary.csv".into()])
}

fn run(cli: Cli) -> Result<bool> {
    let start = Instant::now();
    match cli.command {
        Command::Generate(args) => {
            let cfg = args.load()?;
            let DataSource::Synthetic(spec) = &cfg.data else {
                bail!("generate needs a synthetic data source");
            };
            let dir = cfg.resolve_output_dir("generate");
            let bundle = cfg.load_data()?;
            write_bundle(&bundle, &dir)?;
            let stats = bundle.stats();
            println!(
                "wrote {} subgraphs over {} nodes to {}",
                stats.num_subgraphs,
                stats.num_nodes,
                dir.display()
            );
            let outputs = ["edges.txt", "subgraphs.txt", "splits.txt", "embeddings.txt"]
                .map(String::from)
                .to_vec();
            write_manifest(
                &dir,
                "generate",
                &cfg,
                start,
                outputs,
                serde_json::json!({ "spec": spec, "stats": stats }),
            )?;
        }
        Command::Train(args) => {
            let cfg = args.load()?;
            let dir = cfg.resolve_output_dir("train");
            std::fs::create_dir_all(&dir)?;
            let bundle = cfg.load_data()?;
            let (metrics, models) = train_models(&cfg, &bundle)?;
            let mut outputs = vec![
                "results.csv".into(),
                "traces.csv".into(),
                "metrics.json".into(),
            ];
            for (s, m) in metrics.seeds.iter().zip(&models) {
                println!(
                    "seed {}: test accuracy {:?}{}",
                    s.seed,
                    s.test_accuracy,
                    s.diverged
                        .as_deref()
                        .map(|d| format!(" ({d})"))
                        .unwrap_or_default()
                );
                let name = format!("params_seed{}.json", s.seed);
                m.store.save(&dir.join(&name))?;
                outputs.push(name);
            }
            println!(
                "{} on {}: {:.4} +- {:.4} (majority {:.4})",
                metrics.model, metrics.dataset, metrics.mean, metrics.std, metrics.majority_rate
            );
            metric_rows(&cfg, &metrics).write_rows_csv(&dir.join("results.csv"))?;
            write_traces(&dir.join("traces.csv"), &metrics)?;
            std::fs::write(
                dir.join("metrics.json"),
                serde_json::to_string_pretty(&metrics)?,
            )?;
            write_manifest(
                &dir,
                "train",
                &cfg,
                start,
                outputs,
                serde_json::json!({ "mean": metrics.mean, "std": metrics.std, "accuracies": metrics.accuracies() }),
            )?;
        }
        Command::Evaluate {
            cfg,
            params,
            seed,
            stage,
        } => {
            let cfg = cfg.load()?;
            let stage: Stage = stage.parse()?;
            let bundle = cfg.load_data()?;
            let mut trained = build_model(&cfg.model, &cfg, &bundle, seed)?;
            trained
                .store
                .load(&params)
                .with_context(|| format!("loading {}", params.display()))?;
            let acc = evaluate(&trained, &bundle, &cfg.protocol, stage)?;
            println!("{} accuracy: {acc:.6}", stage.name());
        }
        Command::SweepObserved { cfg, sizes } => {
            let cfg = cfg.load()?;
            let dir = cfg.resolve_output_dir("sweep-observed");
            let bundle = cfg.load_data()?;
            let table = sweep_observed(&cfg, &bundle, &sizes)?;
            let outputs = sweep_outputs(&dir, &table)?;
            write_manifest(
                &dir,
                "sweep-observed",
                &cfg,
                start,
                outputs,
                serde_json::json!({ "sizes": sizes, "summary": table.summary }),
            )?;
        }
        Command::SweepLambda { cfg, khop, second } => {
            let cfg = cfg.load()?;
            let dir = cfg.resolve_output_dir("sweep-lambda");
            let bundle = cfg.load_data()?;
            let table = sweep_lambda(&cfg, &bundle, &khop, &second)?;
            let outputs = sweep_outputs(&dir, &table)?;
            write_manifest(
                &dir,
                "sweep-lambda",
                &cfg,
                start,
                outputs,
                serde_json::json!({ "khop": khop, "second": second, "summary": table.summary }),
            )?;
        }
        Command::Verify => {
            let mut ok = true;
            for r in run_verify() {
                println!(
                    "[{}] {} ({:.2}s): {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.seconds,
                    r.detail
                );
                ok &= r.passed;
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
