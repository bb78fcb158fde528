//! Encoder, readouts, discriminators and prediction head.

mod discriminator;
mod embedding;
mod encoder;
mod head;
mod layers;
mod readout;

pub use discriminator::Discriminator;
pub use embedding::EmbeddingTable;
pub use encoder::{Direction, LocalGraph, SageConfig, SageEncoder, SageLayer};
pub use head::PredictionHead;
pub use layers::{uniform_init, Linear, Mlp2};
pub use readout::{
    positional_length_for, sinusoidal_encoding, AttentionReadout, PreMixer, PreMixerKind, Readout,
};
