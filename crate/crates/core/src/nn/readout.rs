//! Summaries of a node-representation matrix.

use rand::Rng;

use super::layers::{Linear, Mlp2};
use crate::autodiff::{Matrix, ParameterStore, Tape, Var};
use crate::error::{invalid, Result};

/// Sinusoidal positional encoding for positions `0..len`, width `dim`.
pub fn sinusoidal_encoding(positions: &[usize], dim: usize) -> Matrix {
    let mut m = Matrix::zeros(positions.len(), dim);
    for (r, &pos) in positions.iter().enumerate() {
        for i in 0..dim {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000_f64.powf(2.0 * pair / dim as f64);
            m.set(r, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    m
}

/// Positional-encoding length used for a given observed-node count:
/// 20 at 8, 36 at 16, 68 at 32, 132 at 64 (2n + 4).
pub fn positional_length_for(n_obs: usize) -> usize {
    2 * n_obs + 4
}

/// Node mixing applied before attention pooling.
#[derive(Clone, Debug)]
pub enum PreMixer {
    Identity,
    Mlp(Mlp2),
    /// Single-head scaled dot-product self-attention with a residual.
    SelfAttention {
        query: Linear,
        key: Linear,
        value: Linear,
    },
}

impl PreMixer {
    fn forward(&self, tape: &mut Tape, store: &ParameterStore, h: Var) -> Result<Var> {
        match self {
            PreMixer::Identity => Ok(h),
            PreMixer::Mlp(mlp) => mlp.forward(tape, store, h),
            PreMixer::SelfAttention { query, key, value } => {
                let dim = tape.shape(h).1 as f64;
                let q = query.forward(tape, store, h)?;
                let k = key.forward(tape, store, h)?;
                let v = value.forward(tape, store, h)?;
                let kt = tape.transpose(k);
                let logits = tape.matmul(q, kt)?;
                let logits = tape.scale(logits, 1.0 / dim.sqrt());
                let attn = tape.softmax_rows(logits);
                let mixed = tape.matmul(attn, v)?;
                tape.add(h, mixed)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PreMixerKind {
    Identity,
    Mlp,
    SelfAttention,
}

/// Gated soft-attention pooling: `sum_i sigmoid(gate(h_i)) * feat(h_i)`.
#[derive(Clone, Debug)]
pub struct AttentionReadout {
    pub pre: PreMixer,
    pub gate: Linear,
    pub feat: Linear,
    /// Maximum sequence length when positional encoding is on.
    pub max_positions: Option<usize>,
}

#[derive(Clone, Debug)]
pub enum Readout {
    /// Two-layer MLP on every row, then the row mean.
    MeanMlp(Mlp2),
    Attention(AttentionReadout),
}

impl Readout {
    pub fn mean_mlp<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Readout::MeanMlp(Mlp2::new(store, name, dim, rng)?))
    }

    pub fn attention<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        dim: usize,
        pre: PreMixerKind,
        max_positions: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let pre = match pre {
            PreMixerKind::Identity => PreMixer::Identity,
            PreMixerKind::Mlp => PreMixer::Mlp(Mlp2::new(store, &format!("{name}.pre"), dim, rng)?),
            PreMixerKind::SelfAttention => PreMixer::SelfAttention {
                query: Linear::new(store, &format!("{name}.q"), dim, dim, false, rng)?,
                key: Linear::new(store, &format!("{name}.k"), dim, dim, false, rng)?,
                value: Linear::new(store, &format!("{name}.v"), dim, dim, false, rng)?,
            },
        };
        Ok(Readout::Attention(AttentionReadout {
            pre,
            gate: Linear::new(store, &format!("{name}.gate"), dim, 1, true, rng)?,
            feat: Linear::new(store, &format!("{name}.feat"), dim, dim, true, rng)?,
            max_positions,
        }))
    }

    /// `positions[i]` is the observation rank of row `i`; only used by the
    /// attention readout when positional encoding is enabled.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        h: Var,
        positions: Option<&[usize]>,
    ) -> Result<Var> {
        if tape.shape(h).0 == 0 {
            return invalid("readout of an empty node set");
        }
        match self {
            Readout::MeanMlp(mlp) => {
                let z = mlp.forward(tape, store, h)?;
                tape.mean_rows(z)
            }
            Readout::Attention(att) => att.forward(tape, store, h, positions),
        }
    }
}

impl AttentionReadout {
    fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        h: Var,
        positions: Option<&[usize]>,
    ) -> Result<Var> {
        let (n, dim) = tape.shape(h);
        let mut h = h;
        if let (Some(max_len), Some(pos)) = (self.max_positions, positions) {
            if pos.len() != n {
                return invalid(format!("{} positions for {n} rows", pos.len()));
            }
            if n > max_len || pos.iter().any(|&p| p >= max_len) {
                return invalid(format!(
                    "sequence of {n} exceeds maximum positional length {max_len}"
                ));
            }
            let pe = tape.constant(sinusoidal_encoding(pos, dim));
            h = tape.add(h, pe)?;
        }
        let mixed = self.pre.forward(tape, store, h)?;
        let gate = self.gate.forward(tape, store, mixed)?;
        let gate = tape.sigmoid(gate);
        let feat = self.feat.forward(tape, store, mixed)?;
        let gate_t = tape.transpose(gate);
        tape.matmul(gate_t, feat)
    }
}
