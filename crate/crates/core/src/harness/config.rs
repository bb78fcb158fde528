//! Run configuration: a plain `key = value` file plus overrides.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::AdamConfig;
use crate::data::{
    generate_synthetic, load_dataset, read_bundle, DatasetBundle, LoadOptions, ObservationProtocol,
    SyntheticSpec,
};
use crate::error::{invalid, PsiError, Result};
use crate::models::ModelConfig;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "PSI_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    /// Directory written by `write_bundle`.
    Bundle(PathBuf),
    /// Directory with `edge_list.txt` and `subgraphs.pth`.
    SubGnn(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: String,
    pub data: DataSource,
    pub model: ModelConfig,
    pub protocol: ObservationProtocol,
    pub optimizer: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Micro-batches whose gradients are summed before one optimizer step.
    pub accumulation: usize,
    pub seeds: Vec<u64>,
    /// Fine-tune the node feature table instead of keeping it fixed.
    pub train_features: bool,
    /// Width of the random feature table used when the data has none.
    pub embedding_dim: usize,
    /// Seeds trained concurrently.
    pub workers: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: "synthetic".into(),
            data: DataSource::Synthetic(SyntheticSpec::default()),
            model: ModelConfig::default(),
            protocol: ObservationProtocol::default(),
            optimizer: AdamConfig::default(),
            epochs: 100,
            batch_size: 16,
            accumulation: 1,
            seeds: vec![0, 1, 2, 3, 4],
            train_features: false,
            embedding_dim: 64,
            workers: 1,
            output_dir: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| PsiError::InvalidArgument(format!("bad value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => invalid(format!("bad boolean '{value}' for '{key}'")),
    }
}

/// `0,1,2` lists seeds; `0..5` is a half-open range.
pub fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    let value = value.trim();
    if let Some((a, b)) = value.split_once("..") {
        let (a, b): (u64, u64) = (parse("seeds", a)?, parse("seeds", b)?);
        return Ok((a..b).collect());
    }
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse("seeds", s))
        .collect()
}

impl RunConfig {
    /// Applies one setting; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        match key {
            "dataset" => self.dataset = value.trim().to_string(),
            "data" => {
                let v = value.trim();
                self.data = match v.split_once(':') {
                    _ if v == "synthetic" => DataSource::Synthetic(SyntheticSpec::default()),
                    Some(("bundle", dir)) => DataSource::Bundle(dir.into()),
                    Some(("subgnn", dir)) => DataSource::SubGnn(dir.into()),
                    _ => {
                        return invalid(format!(
                            "data must be synthetic, bundle:<dir> or subgnn:<dir>, got '{v}'"
                        ))
                    }
                }
            }
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "accumulation" => self.accumulation = parse(key, value)?,
            "seeds" => self.seeds = parse_seeds(value)?,
            "lr" | "learning_rate" => self.optimizer.learning_rate = parse(key, value)?,
            "weight_decay" => self.optimizer.weight_decay = parse(key, value)?,
            "n_obs" => self.protocol.n_obs = parse(key, value)?,
            "ordered" => self.protocol.ordered = parse_bool(key, value)?,
            "train_jitter" => self.protocol.train_jitter = parse_bool(key, value)?,
            "eval_seed" => self.protocol.eval_fixed_seed = parse(key, value)?,
            "train_features" => self.train_features = parse_bool(key, value)?,
            "embedding_dim" => self.embedding_dim = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "output_dir" => self.output_dir = Some(value.trim().into()),
            _ if key.starts_with("synthetic.") => {
                self.set_synthetic(&key["synthetic.".len()..], value)?
            }
            _ => {
                if !self.model.set(key, value)? {
                    return invalid(format!("unknown config key '{key}'"));
                }
            }
        }
        Ok(())
    }

    fn set_synthetic(&mut self, key: &str, value: &str) -> Result<()> {
        let DataSource::Synthetic(spec) = &mut self.data else {
            return invalid(format!("synthetic.{key} set but data is not synthetic"));
        };
        match key {
            "num_nodes" => spec.num_nodes = parse(key, value)?,
            "num_communities" => spec.num_communities = parse(key, value)?,
            "num_classes" => spec.num_classes = parse(key, value)?,
            "num_subgraphs" => spec.num_subgraphs = parse(key, value)?,
            "p_in" => spec.p_in = parse(key, value)?,
            "p_out" => spec.p_out = parse(key, value)?,
            "min_size" => spec.min_size = parse(key, value)?,
            "max_size" => spec.max_size = parse(key, value)?,
            "stay_prob" => spec.stay_prob = parse(key, value)?,
            "feature_noise" => spec.feature_noise = parse(key, value)?,
            "feature_dim" => spec.feature_dim = parse(key, value)?,
            "seed" => spec.seed = parse(key, value)?,
            _ => return invalid(format!("unknown config key 'synthetic.{key}'")),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return invalid(format!("line {}: expected key = value", no + 1));
            };
            self.set(k, v)
                .map_err(|e| PsiError::InvalidArgument(format!("line {}: {e}", no + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let text = fs::read_to_string(path)?;
        cfg.apply_text(&text)
            .map_err(|e| PsiError::InvalidArgument(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let Some((k, v)) = o.split_once('=') else {
                return invalid(format!("override '{o}' is not key=value"));
            };
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return invalid("seeds must be nonempty");
        }
        if self.epochs == 0 {
            return invalid("epochs must be >= 1");
        }
        if self.batch_size == 0 || self.accumulation == 0 || self.workers == 0 {
            return invalid("batch_size, accumulation and workers must be >= 1");
        }
        if self.model.kind.variant.needs_batch_negatives() && self.batch_size < 2 {
            return invalid(format!("{} needs batch_size >= 2", self.model.kind));
        }
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        self.model.validate()?;
        self.protocol.validate()?;
        self.optimizer.validate()
    }

    pub fn load_data(&self) -> Result<DatasetBundle> {
        let mut bundle = match &self.data {
            DataSource::Synthetic(spec) => generate_synthetic(spec)?,
            DataSource::Bundle(dir) => read_bundle(&self.dataset, dir, self.protocol.ordered)?,
            DataSource::SubGnn(dir) => load_dataset(&LoadOptions {
                ordered: self.protocol.ordered,
                ..LoadOptions::subgnn_dir(&self.dataset, dir)
            })?,
        };
        bundle.name = self.dataset.clone();
        Ok(bundle)
    }

    /// `output_dir`, else `$PSI_OUTPUT_ROOT/<name>`, else `runs/<name>`.
    pub fn resolve_output_dir(&self, name: &str) -> PathBuf {
        if let Some(dir) = &self.output_dir {
            return dir.clone();
        }
        let root = std::env::var_os(OUTPUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(name)
    }
}
