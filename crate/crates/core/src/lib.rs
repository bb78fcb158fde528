//! Partial-subgraph representation learning: graph structures, a small
//! autodiff engine, encoders and readouts, InfoMax objectives, model
//! variants, data protocols and an experiment harness.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod graph;
pub mod harness;
pub mod infomax;
pub mod models;
pub mod nn;

pub use error::{PsiError, Result};
