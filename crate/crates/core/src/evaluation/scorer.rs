use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::autodiff::{Adam, AdamConfig, Axis, Graph};
use crate::event_log::{encode_and_pad, Trace, Vocabulary};
use crate::nn::{classifier_forward, init_classifier, Dropout, ModelParams, TransformerConfig};
use crate::training::ArchConfig;

/// Noisy copies of authentic traces: each output picks a random source and
/// applies `ceil(noise_ratio * len)` random insertions, deletions or
/// substitutions, keeping the length within `[1, max_len]`.
pub fn make_negatives(
    traces: &[Trace],
    vocabulary: &Vocabulary,
    max_len: usize,
    noise_ratio: f64,
    multiplier: usize,
    seed: u64,
) -> Result<Vec<Trace>, EvalError> {
    Ok(negatives_with_sources(traces, vocabulary, max_len, noise_ratio, multiplier, seed)?
        .into_iter()
        .map(|n| n.trace)
        .collect())
}

#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct Negative {
    pub trace: Trace,
    pub source: usize,
    pub edits: usize,
}

pub(crate) fn negatives_with_sources(
    traces: &[Trace],
    vocabulary: &Vocabulary,
    max_len: usize,
    noise_ratio: f64,
    multiplier: usize,
    seed: u64,
) -> Result<Vec<Negative>, EvalError> {
    if !(noise_ratio > 0.0 && noise_ratio <= 1.0) {
        return Err(EvalError::InvalidArgument(format!("noise_ratio {noise_ratio} outside (0, 1]")));
    }
    if multiplier == 0 {
        return Err(EvalError::InvalidArgument("multiplier must be at least 1".into()));
    }
    let sources: Vec<usize> = (0..traces.len()).filter(|&i| !traces[i].is_empty()).collect();
    if sources.is_empty() {
        return Err(EvalError::Empty("negative sampling needs non-empty authentic traces"));
    }
    let n_v = vocabulary.size();
    if n_v < 2 && max_len < 2 {
        return Err(EvalError::InvalidArgument("no edit can change a trace over this vocabulary".into()));
    }
    if let Some(t) = traces.iter().find(|t| t.len() > max_len) {
        return Err(EvalError::InvalidArgument(format!(
            "trace `{}` is longer than max_len {max_len}",
            t.case_id
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = traces.len() * multiplier;
    let width = total.to_string().len();
    let mut out = Vec::with_capacity(total);
    for i in 0..total {
        let source = sources[rng.gen_range(0..sources.len())];
        let ids_in = vocabulary.encode(&traces[source].activities)?;
        let edits = (noise_ratio * ids_in.len() as f64).ceil() as usize;
        // Edits can cancel each other out; redraw until the result differs.
        let ids = loop {
            let mut ids = ids_in.clone();
            for _ in 0..edits {
                apply_edit(&mut ids, n_v, max_len, &mut rng);
            }
            if ids != ids_in {
                break ids;
            }
        };
        let activities = ids
            .iter()
            .map(|&id| vocabulary.name(id).expect("id from the vocabulary").to_string());
        out.push(Negative {
            trace: Trace::new(format!("negative_{:0width$}", i + 1), activities),
            source,
            edits,
        });
    }
    Ok(out)
}

fn apply_edit<R: Rng + ?Sized>(ids: &mut Vec<usize>, n_v: usize, max_len: usize, rng: &mut R) {
    #[derive(Clone, Copy)]
    enum Edit {
        Add,
        Delete,
        Switch,
    }
    let mut allowed = Vec::with_capacity(3);
    if ids.len() < max_len {
        allowed.push(Edit::Add);
    }
    if ids.len() > 1 {
        allowed.push(Edit::Delete);
    }
    if n_v > 1 {
        allowed.push(Edit::Switch);
    }
    match *allowed.choose(rng).expect("at least one edit applies") {
        Edit::Add => {
            let pos = rng.gen_range(0..=ids.len());
            ids.insert(pos, rng.gen_range(0..n_v));
        }
        Edit::Delete => {
            let pos = rng.gen_range(0..ids.len());
            ids.remove(pos);
        }
        Edit::Switch => {
            let pos = rng.gen_range(0..ids.len());
            // A different id, uniformly among the other n_v - 1.
            let shift = rng.gen_range(1..n_v);
            ids[pos] = (ids[pos] + shift) % n_v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    pub noise_ratio: f64,
    /// Negatives per positive.
    pub multiplier: usize,
    pub hidden_dim: usize,
    pub arch: ArchConfig,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Repeat each positive `multiplier` times per epoch so both classes
    /// carry equal weight in the loss.
    pub balance_classes: bool,
    /// Scoring is refused unless held-out F1 exceeds this.
    pub f1_gate: f64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            noise_ratio: 0.2,
            multiplier: 5,
            hidden_dim: 16,
            arch: ArchConfig::default(),
            max_epochs: 30,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
            balance_classes: true,
            f1_gate: 0.8,
        }
    }
}

/// A trained authentic-vs-noisy classifier with its held-out quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerBundle {
    pub config: TransformerConfig,
    pub hidden_dim: usize,
    pub vocabulary: Vocabulary,
    pub params: ModelParams,
    pub f1: f64,
    pub noise_ratio: f64,
    pub multiplier: usize,
    pub f1_gate: f64,
    pub epoch: usize,
    /// Why the scorer refuses to score, when it does.
    pub diagnostic: Option<String>,
}

fn f1_score(probs: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut fnn) = (0usize, 0usize, 0usize);
    for (&p, &y) in probs.iter().zip(labels) {
        match (p > threshold, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fnn) as f64
}

fn encode_all(traces: &[Trace], vocabulary: &Vocabulary, max_len: usize) -> Result<Vec<Vec<usize>>, EvalError> {
    traces
        .iter()
        .map(|t| encode_and_pad(&t.activities, vocabulary, max_len).map_err(EvalError::from))
        .collect()
}

fn predict(params: &ModelParams, cfg: &TransformerConfig, seqs: &[Vec<usize>]) -> Result<Vec<f64>, EvalError> {
    seqs.iter()
        .map(|ids| {
            let mut g = Graph::new();
            let p = params.bind_frozen(&mut g);
            let out = classifier_forward(&mut g, &p, cfg, ids, &mut Dropout::disabled())?;
            Ok(g.value(out).item())
        })
        .collect()
}

/// Train the classifier on `train` (positives) against noisy negatives and
/// measure F1 on `valid` mixed with its own negatives. Generator output is
/// never involved. Parameters from the best held-out epoch are kept.
pub fn train_scorer(
    train: &[Trace],
    valid: &[Trace],
    vocabulary: &Vocabulary,
    max_len: usize,
    cfg: &ScorerConfig,
) -> Result<ScorerBundle, EvalError> {
    if train.is_empty() || valid.is_empty() {
        return Err(EvalError::Empty("the scorer needs training and validation traces"));
    }
    if cfg.batch_size == 0 || cfg.hidden_dim == 0 || cfg.lr <= 0.0 {
        return Err(EvalError::InvalidArgument("batch_size, hidden_dim and lr must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let tcfg = cfg.arch.build(vocabulary.width(), max_len)?;
    let train_neg = make_negatives(train, vocabulary, max_len, cfg.noise_ratio, cfg.multiplier, rng.gen())?;
    let valid_neg = make_negatives(valid, vocabulary, max_len, cfg.noise_ratio, cfg.multiplier, rng.gen())?;

    let repeats = if cfg.balance_classes { cfg.multiplier } else { 1 };
    let mut examples: Vec<(Vec<usize>, f64)> = encode_all(train, vocabulary, max_len)?
        .into_iter()
        .flat_map(|s| std::iter::repeat_n(s, repeats))
        .map(|s| (s, 1.0))
        .chain(encode_all(&train_neg, vocabulary, max_len)?.into_iter().map(|s| (s, 0.0)))
        .collect();
    let held_seqs: Vec<Vec<usize>> = encode_all(valid, vocabulary, max_len)?
        .into_iter()
        .chain(encode_all(&valid_neg, vocabulary, max_len)?)
        .collect();
    let held_labels: Vec<bool> = (0..held_seqs.len()).map(|i| i < valid.len()).collect();

    let mut params = init_classifier(&tcfg, cfg.hidden_dim, &mut rng);
    let mut dropout = Dropout::new(tcfg.dropout_rate, rng.gen());
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut best: Option<(usize, f64, ModelParams)> = None;
    for epoch in 0..cfg.max_epochs {
        examples.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in examples.chunks(cfg.batch_size) {
            let mut g = Graph::new();
            let p = params.bind(&mut g);
            let mut outs = Vec::with_capacity(batch.len());
            for (ids, _) in batch {
                outs.push(classifier_forward(&mut g, &p, &tcfg, ids, &mut dropout)?);
            }
            let probs = g.concat(&outs, Axis::Rows)?;
            let targets: Vec<f64> = batch.iter().map(|(_, y)| *y).collect();
            let loss = g.binary_cross_entropy(probs, &targets)?;
            loss_sum += g.value(loss).item();
            g.backward(loss)?;
            let grads = p.grads(&g);
            opt.step(params.iter_mut(), &grads)?;
        }
        let f1 = f1_score(&predict(&params, &tcfg, &held_seqs)?, &held_labels, 0.5);
        info!(
            "scorer epoch {epoch}: loss {:.4}, held-out F1 {f1:.4}",
            loss_sum / examples.len().div_ceil(cfg.batch_size) as f64
        );
        if best.as_ref().is_none_or(|(_, b, _)| f1 > *b) {
            best = Some((epoch, f1, params.clone()));
        }
    }
    let (epoch, f1, params) = best.unwrap_or((0, 0.0, params));
    let diagnostic = (f1 <= cfg.f1_gate).then(|| {
        format!(
            "held-out F1 {f1:.4} after {} epochs does not exceed {:.2}; try more epochs or a larger noise_ratio",
            cfg.max_epochs, cfg.f1_gate
        )
    });
    if let Some(d) = &diagnostic {
        warn!("scorer unusable: {d}");
    }
    Ok(ScorerBundle {
        config: tcfg,
        hidden_dim: cfg.hidden_dim,
        vocabulary: vocabulary.clone(),
        params,
        f1,
        noise_ratio: cfg.noise_ratio,
        multiplier: cfg.multiplier,
        f1_gate: cfg.f1_gate,
        epoch,
        diagnostic,
    })
}

impl ScorerBundle {
    pub fn is_usable(&self) -> bool {
        self.f1 > self.f1_gate
    }

    fn ensure_usable(&self) -> Result<(), EvalError> {
        if self.is_usable() {
            Ok(())
        } else {
            Err(EvalError::UnusableScorer(self.diagnostic.clone().unwrap_or_else(|| {
                format!("held-out F1 {:.4} does not exceed {:.2}", self.f1, self.f1_gate)
            })))
        }
    }

    /// Probability of being authentic for each trace.
    pub fn probabilities(&self, traces: &[Trace]) -> Result<Vec<f64>, EvalError> {
        self.ensure_usable()?;
        let seqs = encode_all(traces, &self.vocabulary, self.config.max_len)?;
        predict(&self.params, &self.config, &seqs)
    }

    /// Fraction of traces whose authenticity probability exceeds `threshold`.
    pub fn fpr_at(&self, synthetic: &[Trace], threshold: f64) -> Result<f64, EvalError> {
        if synthetic.is_empty() {
            return Err(EvalError::Empty("no synthetic traces to score"));
        }
        let probs = self.probabilities(synthetic)?;
        Ok(probs.iter().filter(|&&p| p > threshold).count() as f64 / probs.len() as f64)
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let bundle: ScorerBundle = serde_json::from_slice(&std::fs::read(path)?)?;
        let expected = init_classifier(&bundle.config, bundle.hidden_dim, &mut ChaCha8Rng::seed_from_u64(0));
        let same = expected.len() == bundle.params.len()
            && expected
                .iter()
                .zip(bundle.params.iter())
                .all(|((a, x), (b, y))| a == b && x.shape() == y.shape());
        if !same {
            return Err(EvalError::InvalidArgument("scorer parameters do not match its config".into()));
        }
        Ok(bundle)
    }
}

/// Share of synthetic traces the scorer labels authentic (threshold 0.5).
pub fn score_synthetic(bundle: &ScorerBundle, synthetic: &[Trace]) -> Result<f64, EvalError> {
    bundle.fpr_at(synthetic, 0.5)
}
