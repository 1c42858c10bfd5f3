use std::collections::BTreeMap;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, ModelConfig, ModelKind};
use super::common::{apply_step, check_finite, first_token_counts, require_data, shuffled_batches, ArchConfig};
use super::TrainError;
use crate::autodiff::{Adam, AdamConfig, Axis, Graph};
use crate::event_log::{sample_random_sequence, EncodedDataset};
use crate::nn::{generator_logits, init_generator, Dropout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NarConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Converged once the loss improved by less than this fraction over
    /// `patience` epochs.
    pub tolerance: f64,
    pub patience: usize,
    pub arch: ArchConfig,
}

impl Default for NarConfig {
    fn default() -> Self {
        Self {
            max_epochs: 500,
            batch_size: 16,
            lr: 1e-3,
            seed: 0,
            tolerance: 1e-4,
            patience: 10,
            arch: ArchConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NarOutcome {
    pub checkpoint: Checkpoint,
    /// Loss of the very first batch, before any update.
    pub initial_loss: f64,
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
}

/// Whether the loss stopped improving: relative gain over the last
/// `patience` epochs below `tolerance`.
pub fn has_converged(losses: &[f64], patience: usize, tolerance: f64) -> bool {
    if patience == 0 || losses.len() <= patience {
        return false;
    }
    let now = losses[losses.len() - 1];
    let then = losses[losses.len() - 1 - patience];
    (then - now) / then.abs().max(f64::MIN_POSITIVE) < tolerance
}

/// Non-autoregressive Transformer: each authentic sequence is paired with a
/// fresh random input and every position is scored independently.
pub fn train_nar(train: &EncodedDataset, cfg: &NarConfig) -> Result<NarOutcome, TrainError> {
    require_data(train, "training")?;
    if cfg.batch_size == 0 || cfg.lr <= 0.0 {
        return Err(TrainError::InvalidConfig("batch_size and lr must be positive".into()));
    }
    let width = train.vocabulary.width();
    let tc = cfg.arch.build(width, train.max_len)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init_generator(&tc, &mut rng);
    let mut dropout = Dropout::new(tc.dropout_rate, rng.gen());
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut losses = Vec::new();
    let mut initial_loss = None;

    for epoch in 0..cfg.max_epochs {
        let batches = shuffled_batches(train.len(), cfg.batch_size, &mut rng);
        let mut sum = 0.0;
        for batch in &batches {
            let mut g = Graph::new();
            let p = params.bind(&mut g);
            let mut parts = Vec::with_capacity(batch.len());
            for &i in batch {
                let z = sample_random_sequence(width, tc.max_len, &mut rng);
                let logits = generator_logits(&mut g, &p, &tc, &z, &mut dropout)?;
                let h = g.softmax(logits, Axis::Cols);
                parts.push(g.cross_entropy(h, &train.sequences[i])?);
            }
            let joined = g.concat(&parts, Axis::Rows)?;
            let loss = g.mean(joined);
            let value = g.value(loss).item();
            check_finite(epoch, "training loss", value)?;
            initial_loss.get_or_insert(value);
            g.backward(loss)?;
            apply_step(epoch, &mut opt, &mut params, &p.grads(&g))?;
            sum += value;
        }
        losses.push(sum / batches.len() as f64);
        if has_converged(&losses, cfg.patience, cfg.tolerance) {
            info!("trans_nar: converged at epoch {epoch}");
            break;
        }
    }
    let last = losses.last().copied().unwrap_or(f64::NAN);
    let checkpoint = Checkpoint {
        kind: ModelKind::TransNar,
        config: ModelConfig::Transformer(tc),
        vocabulary: train.vocabulary.clone(),
        max_len: train.max_len,
        first_token_counts: first_token_counts(train),
        epoch: losses.len().saturating_sub(1),
        metrics: BTreeMap::from([("loss".to_string(), last)]),
        params,
    };
    Ok(NarOutcome {
        checkpoint,
        initial_loss: initial_loss.unwrap_or(f64::NAN),
        losses,
    })
}
