//! Losses, the adversarial training loop, the baseline trainers, sample
//! generation and checkpoint files.

mod checkpoint;
mod common;
mod gan;
mod generate;
mod losses;
mod mle;
mod nar;

pub use checkpoint::{expected_layout, Checkpoint, CheckpointError, ModelConfig, ModelKind, CHECKPOINT_MAGIC};
pub use common::ArchConfig;
pub use gan::{
    estimate_w_a, phase_of, select_equilibrium, train_adversarial, train_adversarial_observed, AuxLoss, EpochRecord, GanConfig, GanOutcome,
    GanVariant, Phase,
};
pub use generate::{generate_samples, generator_output_ids, GenerateOptions, GeneratedSamples};
pub use losses::{
    batch_activity_distribution, discriminator_loss, generator_loss, kl_aux_loss, mse_aux_loss, LossBundle,
};
pub use mle::{train_mle, MleConfig, MleEpoch, MleOutcome};
pub use nar::{has_converged, train_nar, NarConfig, NarOutcome};

use std::io::Write;

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::nn::ModelError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value at epoch {epoch}: {detail}")]
    NonFinite {
        epoch: usize,
        detail: String,
        /// Model state at the end of the last completed epoch, if any.
        last_good: Option<Box<Checkpoint>>,
    },
}

/// Write one JSON object per record and line.
pub fn write_jsonl<T: serde::Serialize, W: Write>(records: &[T], mut out: W) -> std::io::Result<()> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
