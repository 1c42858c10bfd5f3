//! Network architectures built on [`crate::autodiff`]: a Transformer encoder
//! stack with generator, discriminator, classifier and autoregressive heads,
//! and GRU / LSTM cells for the recurrent baselines.

mod models;
mod params;
mod recurrent;
mod transformer;

pub use models::{
    ar_logits, classifier_features, classifier_forward, discriminator_forward, frequency_features,
    generator_forward, generator_logits, init_ar, init_classifier, init_discriminator, init_generator,
    one_hot_sequence, pooling_weights, truncate_one_hot, GeneratorOutput, SampleMode,
};
pub use params::{Bound, ModelParams};
pub use recurrent::{init_recurrent, recurrent_step, CellKind, RecurrentConfig, RecurrentState};
pub use transformer::{causal_mask, encode, positional_encoding, Dropout, TransformerConfig};

use thiserror::Error;

use crate::autodiff::AutodiffError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("expected an input of length {expected}, got {got}")]
    InputLength { expected: usize, got: usize },
}
