//! Reverse-mode differentiation, parameters, and the optimizer.

mod gradcheck;
mod matrix;
mod optim;
mod params;
mod tape;

pub use gradcheck::{finite_diff_check, relative_error};
pub use matrix::Matrix;
pub use optim::{adam_step, AdamConfig};
pub use params::{ParamId, ParameterStore};
pub use tape::{Gradients, Segment, Tape, Var};
