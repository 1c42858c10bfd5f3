use std::collections::BTreeMap;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, ModelConfig, ModelKind};
use super::common::{apply_step, check_finite, first_token_counts, require_data, shuffled_batches, ArchConfig};
use super::TrainError;
use crate::autodiff::{Adam, AdamConfig, Axis, Graph, Tensor, Var};
use crate::event_log::{first_end, EncodedDataset};
use crate::nn::{
    ar_logits, init_ar, init_recurrent, recurrent_step, Bound, CellKind, Dropout, ModelParams, RecurrentConfig,
    RecurrentState,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MleConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    /// Used by the causal Transformer.
    pub arch: ArchConfig,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            batch_size: 16,
            lr: 1e-3,
            patience: 10,
            seed: 0,
            hidden_dim: 64,
            embed_dim: 16,
            arch: ArchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MleOutcome {
    /// Parameters from the epoch with the lowest validation loss (training
    /// loss when there is no validation data).
    pub checkpoint: Checkpoint,
    pub log: Vec<MleEpoch>,
}

/// Positions that are trained on: every token up to the first end token,
/// with the end token itself as the final target.
fn trained_len(seq: &[usize], end: usize) -> usize {
    (first_end(seq, end) + 1).min(seq.len())
}

/// Mean next-token cross-entropy of one sequence and the number of targets.
fn sequence_loss(
    g: &mut Graph,
    p: &Bound,
    config: &ModelConfig,
    seq: &[usize],
    end: usize,
    dropout: &mut Dropout,
) -> Result<Option<(Var, usize)>, TrainError> {
    let n = trained_len(seq, end);
    if n < 2 {
        return Ok(None);
    }
    let targets = &seq[1..n];
    let logits = match config {
        ModelConfig::Recurrent(rc) => {
            let mut state = RecurrentState::zeros(g, rc);
            let mut rows = Vec::with_capacity(n - 1);
            for &tok in &seq[..n - 1] {
                let (logits, next) = recurrent_step(g, p, rc, tok, state)?;
                rows.push(logits);
                state = next;
            }
            g.concat(&rows, Axis::Rows)?
        }
        ModelConfig::Transformer(tc) => {
            let all = ar_logits(g, p, tc, seq, dropout)?;
            let select = g.constant(Tensor::from_fn(n - 1, seq.len(), |r, c| if r == c { 1.0 } else { 0.0 }));
            g.matmul(select, all)?
        }
    };
    let probs = g.softmax(logits, Axis::Cols);
    Ok(Some((g.cross_entropy(probs, targets)?, n - 1)))
}

/// Token-weighted mean loss over `indices`; `None` when no sequence has a target.
fn batch_loss(
    g: &mut Graph,
    p: &Bound,
    config: &ModelConfig,
    data: &EncodedDataset,
    indices: &[usize],
    dropout: &mut Dropout,
) -> Result<Option<Var>, TrainError> {
    let end = data.end_token_id();
    let mut parts = Vec::new();
    let mut total = 0usize;
    for &i in indices {
        if let Some((loss, count)) = sequence_loss(g, p, config, &data.sequences[i], end, dropout)? {
            parts.push((loss, count));
            total += count;
        }
    }
    if total == 0 {
        return Ok(None);
    }
    let weighted: Vec<Var> = parts
        .into_iter()
        .map(|(loss, count)| g.scale(loss, count as f64 / total as f64))
        .collect();
    let joined = g.concat(&weighted, Axis::Rows)?;
    Ok(Some(g.sum(joined)))
}

fn evaluate(params: &ModelParams, config: &ModelConfig, data: &EncodedDataset) -> Result<Option<f64>, TrainError> {
    let mut g = Graph::new();
    let p = params.bind_frozen(&mut g);
    let all: Vec<usize> = (0..data.len()).collect();
    Ok(batch_loss(&mut g, &p, config, data, &all, &mut Dropout::disabled())?.map(|v| g.value(v).item()))
}

pub(crate) fn autoregressive_config(
    kind: ModelKind,
    vocab_width: usize,
    max_len: usize,
    cfg: &MleConfig,
) -> Result<ModelConfig, TrainError> {
    let recurrent = |cell| {
        let rc = RecurrentConfig {
            cell,
            hidden_dim: cfg.hidden_dim,
            embed_dim: cfg.embed_dim,
            vocab_size_with_end: vocab_width,
        };
        rc.validate()?;
        Ok::<_, TrainError>(ModelConfig::Recurrent(rc))
    };
    match kind {
        ModelKind::Gru => recurrent(CellKind::Gru),
        ModelKind::Lstm => recurrent(CellKind::Lstm),
        ModelKind::TransAr => Ok(ModelConfig::Transformer(cfg.arch.build(vocab_width, max_len)?)),
        other => Err(TrainError::InvalidConfig(format!("{other} is not an autoregressive model"))),
    }
}

/// Teacher-forced next-token training for GRU, LSTM and the causal
/// Transformer, with early stopping on `valid`.
pub fn train_mle(
    train: &EncodedDataset,
    valid: &EncodedDataset,
    kind: ModelKind,
    cfg: &MleConfig,
) -> Result<MleOutcome, TrainError> {
    require_data(train, "training")?;
    if cfg.batch_size == 0 || cfg.lr <= 0.0 {
        return Err(TrainError::InvalidConfig("batch_size and lr must be positive".into()));
    }
    let config = autoregressive_config(kind, train.vocabulary.width(), train.max_len, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = match &config {
        ModelConfig::Recurrent(rc) => init_recurrent(rc, &mut rng),
        ModelConfig::Transformer(tc) => init_ar(tc, &mut rng),
    };
    let mut dropout = match &config {
        ModelConfig::Transformer(tc) => Dropout::new(tc.dropout_rate, rng.gen()),
        ModelConfig::Recurrent(_) => Dropout::disabled(),
    };
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut log = Vec::new();
    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut since_best = 0usize;

    for epoch in 0..cfg.max_epochs {
        let (mut sum, mut batches) = (0.0, 0usize);
        for batch in shuffled_batches(train.len(), cfg.batch_size, &mut rng) {
            let mut g = Graph::new();
            let p = params.bind(&mut g);
            let Some(loss) = batch_loss(&mut g, &p, &config, train, &batch, &mut dropout)? else {
                continue;
            };
            let value = g.value(loss).item();
            check_finite(epoch, "training loss", value)?;
            g.backward(loss)?;
            apply_step(epoch, &mut opt, &mut params, &p.grads(&g))?;
            sum += value;
            batches += 1;
        }
        if batches == 0 {
            return Err(TrainError::InvalidConfig("no training sequence has a next-token target".into()));
        }
        let train_loss = sum / batches as f64;
        let valid_loss = if valid.is_empty() {
            None
        } else {
            evaluate(&params, &config, valid)?
        };
        let monitored = match valid_loss {
            Some(v) => v,
            None => evaluate(&params, &config, train)?.unwrap_or(train_loss),
        };
        check_finite(epoch, "monitored loss", monitored)?;
        log.push(MleEpoch {
            epoch,
            train_loss,
            valid_loss,
        });
        if best.as_ref().is_none_or(|(_, b, _)| monitored < *b) {
            best = Some((epoch, monitored, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                info!("{kind}: early stop at epoch {epoch}");
                break;
            }
        }
    }
    let (epoch, monitored, params) = best.unwrap_or((0, f64::NAN, params));
    info!("{kind}: best epoch {epoch}, monitored loss {monitored:.4}");
    let checkpoint = Checkpoint {
        kind,
        config,
        vocabulary: train.vocabulary.clone(),
        max_len: train.max_len,
        first_token_counts: first_token_counts(train),
        epoch,
        metrics: BTreeMap::from([("loss".to_string(), monitored)]),
        params,
    };
    Ok(MleOutcome { checkpoint, log })
}
