use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::autodiff::{Adam, AutodiffError};
use crate::event_log::{first_end, EncodedDataset};
use crate::nn::{ModelParams, TransformerConfig};

/// Transformer hyperparameters that do not depend on the data. Missing sizes
/// fall back to the vocabulary-derived defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub n_blocks: usize,
    pub n_heads: usize,
    pub embed_dim: Option<usize>,
    pub ff_dim: Option<usize>,
    pub dropout_rate: f64,
    pub positional_encoding: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            n_blocks: 2,
            n_heads: 2,
            embed_dim: None,
            ff_dim: None,
            dropout_rate: 0.1,
            positional_encoding: true,
        }
    }
}

impl ArchConfig {
    pub fn build(&self, vocab_width: usize, max_len: usize) -> Result<TransformerConfig, TrainError> {
        let mut cfg = TransformerConfig::for_vocab(vocab_width, max_len);
        cfg.n_blocks = self.n_blocks;
        cfg.n_heads = self.n_heads;
        cfg.embed_dim = match self.embed_dim {
            Some(d) => d,
            None => cfg.embed_dim.max(self.n_heads).div_ceil(self.n_heads.max(1)) * self.n_heads.max(1),
        };
        cfg.ff_dim = self.ff_dim.unwrap_or(4 * cfg.embed_dim);
        cfg.dropout_rate = self.dropout_rate;
        cfg.positional_encoding = self.positional_encoding;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub(crate) fn shuffled_batches<R: Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

pub(crate) fn check_finite(epoch: usize, what: &str, value: f64) -> Result<(), TrainError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(TrainError::NonFinite {
            epoch,
            detail: format!("{what} is {value}"),
            last_good: None,
        })
    }
}

pub(crate) fn apply_step(
    epoch: usize,
    opt: &mut Adam,
    params: &mut ModelParams,
    grads: &BTreeMap<String, Vec<f64>>,
) -> Result<(), TrainError> {
    opt.step(params.iter_mut(), grads).map_err(|e| match e {
        AutodiffError::NonFiniteGradient(name) => TrainError::NonFinite {
            epoch,
            detail: format!("gradient of `{name}` is not finite"),
            last_good: None,
        },
        other => other.into(),
    })
}

pub(crate) fn require_data(data: &EncodedDataset, what: &str) -> Result<(), TrainError> {
    if data.is_empty() {
        return Err(TrainError::InvalidConfig(format!("{what} split is empty")));
    }
    Ok(())
}

/// Counts of each id in first position (sequences that start with the end
/// token are ignored).
pub(crate) fn first_token_counts(data: &EncodedDataset) -> Vec<u64> {
    let end = data.end_token_id();
    let mut counts = vec![0u64; end + 1];
    for seq in &data.sequences {
        if first_end(seq, end) > 0 {
            counts[seq[0]] += 1;
        }
    }
    counts
}
