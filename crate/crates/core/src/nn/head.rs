use rand::Rng;

use super::layers::Linear;
use crate::autodiff::{Matrix, ParameterStore, Tape, Var};
use crate::error::{invalid, Result};

/// Single linear layer to class logits, optionally fed `[s, g W_g]`.
#[derive(Clone, Debug)]
pub struct PredictionHead {
    pub linear: Linear,
    pub g_transform: Option<Linear>,
}

impl PredictionHead {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        dim: usize,
        num_classes: usize,
        g_dim: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let g_transform = match g_dim {
            Some(gd) => Some(Linear::new(
                store,
                &format!("{name}.g"),
                gd,
                dim,
                true,
                rng,
            )?),
            None => None,
        };
        let in_dim = if g_transform.is_some() { 2 * dim } else { dim };
        Ok(Self {
            linear: Linear::new(
                store,
                &format!("{name}.out"),
                in_dim,
                num_classes,
                true,
                rng,
            )?,
            g_transform,
        })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        summary: Var,
        g: Option<&[f64]>,
    ) -> Result<Var> {
        let input = match (g, &self.g_transform) {
            (None, _) => {
                if self.g_transform.is_some() {
                    return invalid("head expects a subgraph feature but none was given");
                }
                summary
            }
            (Some(_), None) => {
                return invalid("subgraph feature given but head has no feature path")
            }
            (Some(g), Some(t)) => {
                if g.len() != t.in_dim {
                    return invalid(format!(
                        "subgraph feature has {} values, expected {}",
                        g.len(),
                        t.in_dim
                    ));
                }
                let gv = tape.constant(Matrix::row_vector(g));
                let gt = t.forward(tape, store, gv)?;
                tape.concat_cols(&[summary, gt])?
            }
        };
        self.linear.forward(tape, store, input)
    }
}
