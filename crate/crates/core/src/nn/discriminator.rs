use rand::Rng;

use super::layers::uniform_init;
use crate::autodiff::{ParamId, ParameterStore, Tape, Var};
use crate::error::{invalid, Result};

/// Scores how strongly node (or summary) rows relate to a summary.
#[derive(Clone, Debug)]
pub enum Discriminator {
    /// `h^T W s`
    Bilinear { weight: ParamId },
    /// `cos(h, s) / temperature`
    Cosine { temperature: f64 },
}

impl Discriminator {
    pub fn bilinear<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.add(format!("{name}.weight"), uniform_init(dim, dim, dim, rng))?;
        Ok(Discriminator::Bilinear { weight })
    }

    pub fn cosine(temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) {
            return invalid(format!("temperature {temperature} must be > 0"));
        }
        Ok(Discriminator::Cosine { temperature })
    }

    /// Scores every row of `h` (n x F) against `summary` (1 x F); n x 1.
    pub fn score(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        h: Var,
        summary: Var,
    ) -> Result<Var> {
        let (hs, ss) = (tape.shape(h), tape.shape(summary));
        if ss.0 != 1 || hs.1 != ss.1 {
            return Err(crate::error::PsiError::Shape {
                op: "discriminator",
                left: hs,
                right: ss,
            });
        }
        match self {
            Discriminator::Bilinear { weight } => {
                let w = tape.param(store, *weight);
                let hw = tape.matmul(h, w)?;
                let st = tape.transpose(summary);
                tape.matmul(hw, st)
            }
            Discriminator::Cosine { temperature } => {
                if tape.value(summary).max_abs() == 0.0
                    || (0..hs.0).any(|r| tape.value(h).row(r).iter().all(|&x| x == 0.0))
                {
                    log::debug!("cosine score with a zero vector; scoring it 0");
                }
                let hn = tape.normalize_rows(h);
                let sn = tape.normalize_rows(summary);
                let st = tape.transpose(sn);
                let cos = tape.matmul(hn, st)?;
                Ok(tape.scale(cos, 1.0 / temperature))
            }
        }
    }
}
