//! PSI model variants, the two-stage composition and the batched step.

mod config;
mod psi;

pub use config::{Estimator, ModelConfig, ModelKind, ReadoutKind, Variant};
pub use psi::{
    attention_pool, cross_entropy, top_k_indices, BatchContext, BatchItem, Forward, PsiModel,
    StepOutput,
};
