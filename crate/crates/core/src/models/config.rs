use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, PsiError, Result};
use crate::graph::EdgeSource;
use crate::infomax::LossWeights;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Encoder, readout and head with no InfoMax term.
    Baseline,
    PsDgi,
    PsInfoGraph,
    PsMvgrl,
    PsGraphCl,
    Khop,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::PsDgi => "ps-dgi",
            Variant::PsInfoGraph => "ps-infograph",
            Variant::PsMvgrl => "ps-mvgrl",
            Variant::PsGraphCl => "ps-graphcl",
            Variant::Khop => "khop",
        }
    }

    pub fn default_estimator(self) -> Option<Estimator> {
        match self {
            Variant::Baseline => None,
            Variant::PsGraphCl => Some(Estimator::InfoNce),
            _ => Some(Estimator::Gd),
        }
    }

    /// Needs other subgraphs of the batch during training.
    pub fn needs_batch_negatives(self) -> bool {
        matches!(self, Variant::PsInfoGraph | Variant::PsGraphCl)
    }
}

impl FromStr for Variant {
    type Err = PsiError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Variant::Baseline,
            "ps-dgi" | "dgi" => Variant::PsDgi,
            "ps-infograph" | "infograph" => Variant::PsInfoGraph,
            "ps-mvgrl" | "mvgrl" => Variant::PsMvgrl,
            "ps-graphcl" | "graphcl" => Variant::PsGraphCl,
            "khop" | "k-hop" => Variant::Khop,
            other => return invalid(format!("unknown model variant '{other}'")),
        })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimator {
    Gd,
    InfoNce,
}

impl FromStr for Estimator {
    type Err = PsiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gd" => Ok(Estimator::Gd),
            "infonce" => Ok(Estimator::InfoNce),
            other => invalid(format!("unknown estimator '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReadoutKind {
    MeanMlp,
    Attention,
}

impl FromStr for ReadoutKind {
    type Err = PsiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" | "mean-mlp" => Ok(ReadoutKind::MeanMlp),
            "attention" => Ok(ReadoutKind::Attention),
            other => invalid(format!("unknown readout '{other}'")),
        }
    }
}

/// A model name such as `ps-infograph` or `khop+ps-infograph`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelKind {
    pub variant: Variant,
    /// Second stage stacked on a k-hop first stage.
    pub second: Option<Variant>,
}

impl ModelKind {
    pub fn single(variant: Variant) -> Self {
        Self {
            variant,
            second: None,
        }
    }

    pub fn two_stage(second: Variant) -> Self {
        Self {
            variant: Variant::Khop,
            second: Some(second),
        }
    }
}

impl FromStr for ModelKind {
    type Err = PsiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('+') {
            None => Ok(Self::single(s.parse()?)),
            Some((first, second)) => {
                let first: Variant = first.parse()?;
                let second: Variant = second.parse()?;
                if first != Variant::Khop {
                    return invalid(format!("two-stage models start with khop, got {first}"));
                }
                Ok(Self::two_stage(second))
            }
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.second {
            Some(second) => write!(f, "{}+{}", self.variant, second),
            None => write!(f, "{}", self.variant),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// `None` picks the variant's estimator.
    pub estimator: Option<Estimator>,
    pub k: usize,
    pub pool_ratio: f64,
    /// Whether observed nodes compete in top-k pooling.
    pub pool_includes_observed: bool,
    /// Upper bound on sampled k-hop neighbors.
    pub khop_cap: Option<usize>,
    pub weights: LossWeights,
    pub p_d: f64,
    pub aug_p: f64,
    pub ppr_alpha: f64,
    pub ppr_top_t: usize,
    pub temperature: f64,
    pub hidden_dim: usize,
    pub use_positional_encoding: bool,
    pub max_positions: usize,
    /// `None` uses attention for k-hop models and mean-MLP otherwise.
    pub readout: Option<ReadoutKind>,
    pub dropout: f64,
    pub bidirectional: bool,
    pub skip: bool,
    /// Edges used when encoding full subgraphs.
    pub full_edge_source: EdgeSource,
    /// Feed `[s_khop, s_obs]` to the head of k-hop models.
    pub head_uses_observed_summary: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::single(Variant::PsInfoGraph),
            estimator: None,
            k: 1,
            pool_ratio: 1e-2,
            pool_includes_observed: true,
            khop_cap: Some(5000),
            weights: LossWeights::default(),
            p_d: 0.0,
            aug_p: 0.2,
            ppr_alpha: 0.15,
            ppr_top_t: 32,
            temperature: 0.5,
            hidden_dim: 64,
            use_positional_encoding: false,
            max_positions: 20,
            readout: None,
            dropout: 0.2,
            bidirectional: false,
            skip: true,
            full_edge_source: EdgeSource::Subgraph,
            head_uses_observed_summary: false,
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

impl ModelConfig {
    pub fn for_kind(kind: ModelKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn estimator(&self) -> Option<Estimator> {
        match self.kind.second {
            Some(_) => Some(Estimator::Gd),
            None => self.estimator.or(self.kind.variant.default_estimator()),
        }
    }

    pub fn readout_kind(&self) -> ReadoutKind {
        self.readout
            .unwrap_or(if self.kind.variant == Variant::Khop {
                ReadoutKind::Attention
            } else {
                ReadoutKind::MeanMlp
            })
    }

    /// Applies one `key = value` setting. Returns `false` for keys this
    /// config does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "variant" | "model" => self.kind = value.parse()?,
            "estimator" => self.estimator = Some(value.parse()?),
            "k" => self.k = parse(key, value)?,
            "pool_ratio" => self.pool_ratio = parse(key, value)?,
            "pool_includes_observed" => self.pool_includes_observed = parse_bool(key, value)?,
            "khop_cap" => {
                self.khop_cap = match value.trim() {
                    "none" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "lambda" => self.weights.lambda_single = parse(key, value)?,
            "lambda_khop" => self.weights.lambda_khop = parse(key, value)?,
            "lambda_second" => self.weights.lambda_second = parse(key, value)?,
            "p_d" => self.p_d = parse(key, value)?,
            "aug_p" => self.aug_p = parse(key, value)?,
            "ppr_alpha" => self.ppr_alpha = parse(key, value)?,
            "ppr_top_t" => self.ppr_top_t = parse(key, value)?,
            "temperature" => self.temperature = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "use_positional_encoding" => self.use_positional_encoding = parse_bool(key, value)?,
            "max_positions" => self.max_positions = parse(key, value)?,
            "readout" => self.readout = Some(value.parse()?),
            "dropout" => self.dropout = parse(key, value)?,
            "bidirectional" => self.bidirectional = parse_bool(key, value)?,
            "skip" => self.skip = parse_bool(key, value)?,
            "full_edge_source" => {
                self.full_edge_source = match value.trim() {
                    "subgraph" => EdgeSource::Subgraph,
                    "global" => EdgeSource::Global,
                    other => return invalid(format!("unknown edge source '{other}'")),
                }
            }
            "head_uses_observed_summary" => {
                self.head_uses_observed_summary = parse_bool(key, value)?
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        let kind = self.kind;
        if let Some(second) = kind.second {
            if !matches!(second, Variant::PsDgi | Variant::PsInfoGraph) {
                return invalid(format!(
                    "second stage must be ps-dgi or ps-infograph, got {second}"
                ));
            }
        }
        if let Some(est) = self.estimator {
            let expected = if kind.second.is_some() {
                Some(Estimator::Gd)
            } else {
                kind.variant.default_estimator()
            };
            if Some(est) != expected {
                return invalid(format!("estimator {est:?} does not match model {kind}"));
            }
        }
        if self.k == 0 {
            return invalid("k must be >= 1");
        }
        if !(self.pool_ratio > 0.0 && self.pool_ratio <= 1.0) {
            return invalid(format!("pool_ratio {} outside (0, 1]", self.pool_ratio));
        }
        for (name, p) in [
            ("p_d", self.p_d),
            ("aug_p", self.aug_p),
            ("dropout", self.dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return invalid(format!("{name} = {p} outside [0, 1)"));
            }
        }
        if !(self.ppr_alpha > 0.0 && self.ppr_alpha < 1.0) {
            return invalid(format!("ppr_alpha {} outside (0, 1)", self.ppr_alpha));
        }
        if self.ppr_top_t == 0 {
            return invalid("ppr_top_t must be >= 1");
        }
        if !(self.temperature > 0.0) {
            return invalid("temperature must be > 0");
        }
        if self.hidden_dim == 0 || (self.bidirectional && self.hidden_dim % 2 != 0) {
            return invalid(format!("hidden_dim {} unusable", self.hidden_dim));
        }
        if self.khop_cap == Some(0) {
            return invalid("khop_cap must be >= 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_round_trip() {
        for s in [
            "baseline",
            "ps-dgi",
            "ps-infograph",
            "ps-mvgrl",
            "ps-graphcl",
            "khop",
            "khop+ps-infograph",
            "khop+ps-dgi",
        ] {
            let k: ModelKind = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        assert!("ps-dgi+khop".parse::<ModelKind>().is_err());
        let mut cfg = ModelConfig::for_kind("khop+ps-graphcl".parse().unwrap());
        assert!(cfg.validate().is_err());
        cfg.kind = "khop+ps-dgi".parse().unwrap();
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn settings_and_validation() {
        let mut cfg = ModelConfig::default();
        assert!(cfg.set("lambda_khop", "2.5").unwrap());
        assert_eq!(cfg.weights.lambda_khop, 2.5);
        assert!(cfg.set("use_positional_encoding", "true").unwrap());
        assert!(!cfg.set("epochs", "3").unwrap());
        assert!(cfg.set("k", "x").is_err());
        cfg.set("variant", "ps-graphcl").unwrap();
        assert_eq!(cfg.estimator(), Some(Estimator::InfoNce));
        cfg.set("estimator", "gd").unwrap();
        assert!(cfg.validate().is_err());
        cfg.set("estimator", "infonce").unwrap();
        cfg.validate().unwrap();
        cfg.pool_ratio = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn readout_defaults() {
        assert_eq!(
            ModelConfig::for_kind(ModelKind::single(Variant::Khop)).readout_kind(),
            ReadoutKind::Attention
        );
        assert_eq!(
            ModelConfig::for_kind(ModelKind::single(Variant::PsDgi)).readout_kind(),
            ReadoutKind::MeanMlp
        );
    }
}
