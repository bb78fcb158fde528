//! Training loop, evaluation and per-run metrics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::stats::{mean, sample_std};
use crate::autodiff::{adam_step, ParameterStore};
use crate::data::{sample_observed, DatasetBundle, ObservationProtocol, Stage};
use crate::error::{invalid, PsiError, Result};
use crate::models::{BatchContext, BatchItem, ModelConfig, PsiModel, StepOutput};
use crate::nn::EmbeddingTable;

const EVAL_BATCH: usize = 64;

/// Mean losses over one epoch's training batches, plus validation accuracy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub loss_graph: f64,
    pub loss_infomax: Option<f64>,
    pub loss_khop: Option<f64>,
    pub loss_second: Option<f64>,
    pub total: f64,
    pub val_accuracy: Option<f64>,
}

impl EpochTrace {
    /// The InfoMax term the model optimizes: single-stage loss, else k-hop.
    pub fn infomax_component(&self) -> Option<f64> {
        self.loss_infomax.or(self.loss_khop)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub test_accuracy: Option<f64>,
    pub best_val_accuracy: Option<f64>,
    pub best_epoch: Option<usize>,
    pub traces: Vec<EpochTrace>,
    /// Set when training stopped on a non-finite loss.
    pub diverged: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub dataset: String,
    pub model: String,
    pub seeds: Vec<SeedResult>,
    pub mean: f64,
    pub std: f64,
    pub majority_rate: f64,
}

impl MetricsRecord {
    pub fn from_seeds(
        dataset: &str,
        model: &str,
        seeds: Vec<SeedResult>,
        majority_rate: f64,
    ) -> Self {
        let acc: Vec<f64> = seeds.iter().filter_map(|s| s.test_accuracy).collect();
        Self {
            dataset: dataset.to_string(),
            model: model.to_string(),
            mean: mean(&acc),
            std: sample_std(&acc),
            seeds,
            majority_rate,
        }
    }

    /// Test accuracies of seeds that finished.
    pub fn accuracies(&self) -> Vec<f64> {
        self.seeds.iter().filter_map(|s| s.test_accuracy).collect()
    }

    pub fn diverged(&self) -> usize {
        self.seeds.iter().filter(|s| s.diverged.is_some()).count()
    }
}

/// A model with its parameters.
pub struct TrainedModel {
    pub store: ParameterStore,
    pub model: PsiModel,
}

pub fn build_model(
    cfg: &ModelConfig,
    run: &RunConfig,
    bundle: &DatasetBundle,
    seed: u64,
) -> Result<TrainedModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    let features = match &bundle.features {
        Some(f) => EmbeddingTable::preloaded(&mut store, f.clone(), run.train_features)?,
        None => EmbeddingTable::random(
            &mut store,
            bundle.graph.num_nodes(),
            run.embedding_dim,
            &mut rng,
        )?,
    };
    let model = PsiModel::new(
        &mut store,
        cfg.clone(),
        features,
        bundle.num_classes,
        bundle.subgraph_feature_dim(),
        &mut rng,
    )?;
    Ok(TrainedModel { store, model })
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// Predicted class of each item, dropout off.
pub fn predict(
    trained: &TrainedModel,
    bundle: &DatasetBundle,
    items: &[BatchItem],
) -> Result<Vec<usize>> {
    let ctx = BatchContext {
        graph: &bundle.graph,
        records: &bundle.records,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(EVAL_BATCH) {
        let step = trained
            .model
            .step(&trained.store, &ctx, chunk, false, &mut rng)?;
        for r in 0..step.logits.rows() {
            out.push(argmax(step.logits.row(r)));
        }
    }
    Ok(out)
}

/// Accuracy on the frozen observations of `stage`.
pub fn evaluate(
    trained: &TrainedModel,
    bundle: &DatasetBundle,
    protocol: &ObservationProtocol,
    stage: Stage,
) -> Result<f64> {
    let frozen = bundle.frozen_observations(protocol, stage)?;
    if frozen.is_empty() {
        return invalid(format!("no {} records to evaluate", stage.name()));
    }
    let items: Vec<BatchItem> = frozen
        .into_iter()
        .map(|(record_index, observed)| BatchItem {
            record_index,
            observed,
        })
        .collect();
    let pred = predict(trained, bundle, &items)?;
    let correct = items
        .iter()
        .zip(&pred)
        .filter(|(it, &p)| bundle.records[it.record_index].label == p)
        .count();
    Ok(correct as f64 / items.len() as f64)
}

/// Train-index batches for one epoch. A trailing singleton joins the
/// previous batch so batch-negative variants always see two subgraphs.
fn epoch_batches(train: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order = train.to_vec();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(last);
    }
    batches
}

#[derive(Default)]
struct Running {
    n: usize,
    graph: f64,
    total: f64,
    infomax: Option<f64>,
    khop: Option<f64>,
    second: Option<f64>,
}

impl Running {
    fn add(&mut self, out: &StepOutput) {
        let add = |acc: &mut Option<f64>, v: Option<f64>| {
            if let Some(v) = v {
                *acc = Some(acc.unwrap_or(0.0) + v);
            }
        };
        self.n += 1;
        self.graph += out.loss_graph.unwrap_or(0.0);
        self.total += out.total.unwrap_or(0.0);
        add(&mut self.infomax, out.loss_infomax);
        add(&mut self.khop, out.loss_khop);
        add(&mut self.second, out.loss_second);
    }

    fn trace(&self, epoch: usize, val_accuracy: Option<f64>) -> EpochTrace {
        let n = self.n.max(1) as f64;
        EpochTrace {
            epoch,
            loss_graph: self.graph / n,
            loss_infomax: self.infomax.map(|v| v / n),
            loss_khop: self.khop.map(|v| v / n),
            loss_second: self.second.map(|v| v / n),
            total: self.total / n,
            val_accuracy,
        }
    }
}

/// Trains one seed and returns its result together with the best-validation
/// parameters.
pub fn train_seed(
    run: &RunConfig,
    bundle: &DatasetBundle,
    seed: u64,
) -> Result<(SeedResult, TrainedModel)> {
    run.validate()?;
    let mut trained = build_model(&run.model, run, bundle, seed)?;
    let train_idx = bundle.indices(Stage::Train);
    if train_idx.is_empty() {
        return invalid("no training records");
    }
    let has_val = !bundle.indices(Stage::Val).is_empty();
    let has_test = !bundle.indices(Stage::Test).is_empty();
    let ctx = BatchContext {
        graph: &bundle.graph,
        records: &bundle.records,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let scale = 1.0 / run.accumulation as f64;
    let mut result = SeedResult {
        seed,
        test_accuracy: None,
        best_val_accuracy: None,
        best_epoch: None,
        traces: Vec::with_capacity(run.epochs),
        diverged: None,
    };
    let mut best: Option<(f64, Vec<_>)> = None;

    'epochs: for epoch in 1..=run.epochs {
        let mut running = Running::default();
        let batches = epoch_batches(&train_idx, run.batch_size, &mut rng);
        let mut pending = 0;
        trained.store.zero_grads();
        for batch in &batches {
            let items = batch
                .iter()
                .map(|&i| {
                    Ok(BatchItem {
                        record_index: i,
                        observed: sample_observed(
                            &bundle.records[i],
                            i,
                            &run.protocol,
                            Stage::Train,
                            &mut rng,
                        )?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let out = trained.model.accumulate_gradients(
                &mut trained.store,
                &ctx,
                &items,
                scale,
                &mut rng,
            )?;
            if !out.total.is_some_and(f64::is_finite) {
                let msg = format!("non-finite loss at epoch {epoch}: {out:?}", out = out.total);
                log::warn!("seed {seed}: {msg}");
                result.diverged = Some(PsiError::Diverged { epoch, detail: msg }.to_string());
                break 'epochs;
            }
            running.add(&out);
            pending += 1;
            if pending == run.accumulation {
                adam_step(&mut trained.store, &run.optimizer)?;
                pending = 0;
            }
        }
        if pending > 0 {
            adam_step(&mut trained.store, &run.optimizer)?;
        }
        let val = if has_val {
            Some(evaluate(&trained, bundle, &run.protocol, Stage::Val)?)
        } else {
            None
        };
        let trace = running.trace(epoch, val);
        log::debug!(
            "seed {seed} epoch {epoch}: graph {:.4} infomax {:?} total {:.4} val {:?}",
            trace.loss_graph,
            trace.infomax_component(),
            trace.total,
            val
        );
        result.traces.push(trace);
        let score = val.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, trained.store.snapshot()));
            result.best_epoch = Some(epoch);
            result.best_val_accuracy = val;
        }
    }

    if result.diverged.is_none() {
        if let Some((_, snapshot)) = &best {
            trained.store.restore(snapshot)?;
        }
        if has_test {
            result.test_accuracy = Some(evaluate(&trained, bundle, &run.protocol, Stage::Test)?);
        }
    }
    Ok((result, trained))
}

/// Trains every seed, `run.workers` at a time, keeping each seed's
/// best-validation model.
pub fn train_models(
    run: &RunConfig,
    bundle: &DatasetBundle,
) -> Result<(MetricsRecord, Vec<TrainedModel>)> {
    run.validate()?;
    bundle.validate()?;
    let mut results = Vec::with_capacity(run.seeds.len());
    let mut models = Vec::with_capacity(run.seeds.len());
    for seeds in run.seeds.chunks(run.workers) {
        let outs: Vec<Result<(SeedResult, TrainedModel)>> = if seeds.len() == 1 {
            vec![train_seed(run, bundle, seeds[0])]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = seeds
                    .iter()
                    .map(|&seed| s.spawn(move || train_seed(run, bundle, seed)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("training worker panicked"))
                    .collect()
            })
        };
        for out in outs {
            let (r, m) = out?;
            results.push(r);
            models.push(m);
        }
    }
    let record = MetricsRecord::from_seeds(
        &bundle.name,
        &run.model.kind.to_string(),
        results,
        bundle.majority_rate(Stage::Test),
    );
    Ok((record, models))
}

pub fn train_on(run: &RunConfig, bundle: &DatasetBundle) -> Result<MetricsRecord> {
    train_models(run, bundle).map(|r| r.0)
}

/// Loads the configured data and trains every seed.
pub fn train(run: &RunConfig) -> Result<MetricsRecord> {
    let bundle = run.load_data()?;
    train_on(run, &bundle)
}
