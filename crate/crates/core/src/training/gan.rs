use std::collections::BTreeMap;

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, ModelConfig, ModelKind};
use super::common::{apply_step, check_finite, first_token_counts, require_data, shuffled_batches, ArchConfig};
use super::losses::{batch_activity_distribution, generator_loss, kl_aux_loss, mse_aux_loss, LossBundle};
use super::TrainError;
use crate::autodiff::{sample_gumbel, Adam, AdamConfig, Axis, Graph, Tensor, Var};
use crate::event_log::{first_end, sample_random_sequence, truncate_at_end, EncodedDataset};
use crate::nn::{
    discriminator_forward, generator_forward, init_discriminator, init_generator, one_hot_sequence,
    truncate_one_hot, Bound, Dropout, ModelParams, SampleMode, TransformerConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanVariant {
    /// Adversarial loss only.
    Pgan,
    /// Plus the mean-squared-error activity loss.
    PganM,
    /// Plus the KL-divergence activity loss.
    PganK,
}

impl GanVariant {
    pub fn kind(self) -> ModelKind {
        match self {
            GanVariant::Pgan => ModelKind::Pgan,
            GanVariant::PganM => ModelKind::PganM,
            GanVariant::PganK => ModelKind::PganK,
        }
    }

    pub fn from_kind(kind: ModelKind) -> Option<Self> {
        match kind {
            ModelKind::Pgan => Some(GanVariant::Pgan),
            ModelKind::PganM => Some(GanVariant::PganM),
            ModelKind::PganK => Some(GanVariant::PganK),
            _ => None,
        }
    }

    pub fn aux_loss(self) -> Option<AuxLoss> {
        match self {
            GanVariant::Pgan => None,
            GanVariant::PganM => Some(AuxLoss::Mse),
            GanVariant::PganK => Some(AuxLoss::Kl),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxLoss {
    Kl,
    Mse,
}

impl AuxLoss {
    pub fn eval(self, authentic: &[f64], synthetic: &[f64], m: usize) -> f64 {
        match self {
            AuxLoss::Kl => kl_aux_loss(authentic, synthetic, m),
            AuxLoss::Mse => mse_aux_loss(authentic, synthetic, m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub variant: GanVariant,
    /// Generator epochs per discriminator epoch.
    pub k: usize,
    /// Auxiliary-loss weight; estimated from probe batches when absent.
    pub w_a: Option<f64>,
    pub batch_size: usize,
    /// Total epochs, generator and discriminator epochs both counted.
    pub max_epochs: usize,
    /// Batches per epoch; a full pass over the training data when absent.
    pub steps_per_epoch: Option<usize>,
    pub lr_g: f64,
    pub lr_d: f64,
    pub tau: f64,
    pub seed: u64,
    pub n_probe_batches: usize,
    /// Authentic (and as many synthetic) sequences in the fixed accuracy probe.
    pub probe_size: usize,
    /// Trailing window for equilibrium selection.
    pub window: usize,
    /// Epochs before which no equilibrium checkpoint is taken: early on the
    /// discriminator is still near chance, which looks like equilibrium.
    /// The final state is kept when no epoch qualifies.
    pub warmup_epochs: usize,
    pub generator: ArchConfig,
    pub discriminator: ArchConfig,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            variant: GanVariant::PganK,
            k: 2,
            w_a: None,
            batch_size: 16,
            max_epochs: 500,
            steps_per_epoch: None,
            lr_g: 1e-4,
            lr_d: 1e-4,
            tau: 1.0,
            seed: 0,
            n_probe_batches: 10,
            probe_size: 50,
            window: 10,
            warmup_epochs: 100,
            generator: ArchConfig::default(),
            discriminator: ArchConfig::default(),
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.k < 1 {
            return bad("k must be at least 1");
        }
        if self.steps_per_epoch == Some(0) {
            return bad("steps_per_epoch must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if self.w_a.is_some_and(|w| !(w >= 0.0 && w.is_finite())) {
            return bad("w_a must be finite and non-negative");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if !(self.lr_g > 0.0 && self.lr_d > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.n_probe_batches < 1 || self.probe_size < 1 || self.window < 1 {
            return bad("n_probe_batches, probe_size and window must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Generator,
    Discriminator,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    #[serde(flatten)]
    pub losses: LossBundle,
    pub aux: Option<AuxLoss>,
    pub w_a: f64,
    /// Mean `d_accuracy` over the trailing window ending here (full windows only).
    pub window_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GanOutcome {
    /// Generator at the epoch whose trailing-window accuracy is closest to 0.5.
    pub equilibrium: Checkpoint,
    pub last: Checkpoint,
    pub log: Vec<EpochRecord>,
    pub w_a: f64,
}

/// Phase of `epoch` under a `k`:1 schedule starting with generator epochs.
pub fn phase_of(epoch: usize, k: usize) -> Phase {
    if epoch % (k + 1) < k {
        Phase::Generator
    } else {
        Phase::Discriminator
    }
}

/// Index of the record whose full-window accuracy is closest to 0.5 (earliest
/// on ties), considering only epochs at or after `warmup`.
pub fn select_equilibrium(log: &[EpochRecord], warmup: usize) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, rec) in log.iter().enumerate() {
        let Some(acc) = rec.window_accuracy else { continue };
        if rec.epoch < warmup {
            continue;
        }
        let gap = (acc - 0.5).abs();
        if best.is_none_or(|(_, b)| gap < b) {
            best = Some((i, gap));
        }
    }
    best.map(|(i, _)| i)
}

struct Models {
    gcfg: TransformerConfig,
    dcfg: TransformerConfig,
    gen: ModelParams,
    disc: ModelParams,
}

struct FakeBatch {
    /// Truncated one-hot sequences as graph nodes.
    seqs: Vec<Var>,
    ids: Vec<Vec<usize>>,
}

fn generate_fakes(
    g: &mut Graph,
    gb: &Bound,
    cfg: &TransformerConfig,
    n: usize,
    tau: f64,
    rng: &mut ChaCha8Rng,
    dropout: &mut Dropout,
) -> Result<FakeBatch, TrainError> {
    let width = cfg.vocab_size_with_end;
    let end = width - 1;
    let mut seqs = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        let z = sample_random_sequence(width, cfg.max_len, rng);
        let noise = sample_gumbel(cfg.max_len, width, rng);
        let out = generator_forward(g, gb, cfg, &z, SampleMode::ArgmaxSt { noise: &noise, tau }, dropout)?;
        let s = truncate_one_hot(g, out.s, end)?;
        ids.push(g.value(s).argmax_rows());
        seqs.push(s);
    }
    Ok(FakeBatch { seqs, ids })
}

/// `mean(-ln d)` over 1x1 score nodes, optionally of `1 - d`.
fn neg_log_mean(g: &mut Graph, scores: &[Var], complement: bool) -> Result<Var, TrainError> {
    let col = g.concat(scores, Axis::Rows)?;
    let p = if complement {
        let ones = g.constant(Tensor::filled(scores.len(), 1, 1.0));
        g.sub(ones, col)?
    } else {
        col
    };
    let logp = g.log(p);
    let m = g.mean(logp);
    Ok(g.scale(m, -1.0))
}

/// Differentiable activity distribution of a fake batch: per-id counts of the
/// rows before each first end token over the whole batch, normalized to sum to 1.
fn fake_distribution(g: &mut Graph, fakes: &FakeBatch, end: usize) -> Result<Var, TrainError> {
    let mut total = 0usize;
    let mut counts: Option<Var> = None;
    for (s, ids) in fakes.seqs.iter().zip(&fakes.ids) {
        let cut = first_end(ids, end);
        total += cut;
        let mask = g.constant(Tensor::from_fn(1, ids.len(), |_, c| if c < cut { 1.0 } else { 0.0 }));
        let row = g.matmul(mask, *s)?;
        counts = Some(match counts {
            Some(acc) => g.add(acc, row)?,
            None => row,
        });
    }
    let counts = counts.expect("non-empty batch");
    let counts = g.slice_cols(counts, 0, end)?;
    if total == 0 {
        return Ok(g.scale(counts, 0.0));
    }
    // Normalize through the graph: with a constant divisor the gradient would
    // lower every activity count at once and reward emitting the end token.
    let sum = g.sum(counts);
    let log_sum = g.log(sum);
    let neg = g.scale(log_sum, -1.0);
    let inv = g.exp(neg);
    Ok(g.mul(counts, inv)?)
}

fn aux_graph(g: &mut Graph, kind: AuxLoss, authentic: &[f64], synthetic: Var, m: usize) -> Result<Var, TrainError> {
    let n = authentic.len();
    match kind {
        AuxLoss::Kl => {
            let log_x = g.constant(Tensor::row(authentic.iter().map(|x| x.max(crate::autodiff::PROB_EPS).ln()).collect()));
            let log_s = g.log(synthetic);
            let diff = g.sub(log_s, log_x)?;
            let terms = g.mul(synthetic, diff)?;
            let sum = g.sum(terms);
            Ok(g.scale(sum, 1.0 / m as f64))
        }
        AuxLoss::Mse => {
            let x = g.constant(Tensor::row(authentic.to_vec()));
            let diff = g.sub(synthetic, x)?;
            let sq = g.mul(diff, diff)?;
            let sum = g.sum(sq);
            Ok(g.scale(sum, 1.0 / (m * n.max(1)) as f64))
        }
    }
}

fn batch_of<'a>(data: &'a EncodedDataset, idx: &[usize]) -> Vec<&'a [usize]> {
    idx.iter().map(|&i| data.sequences[i].as_slice()).collect()
}

/// Run the generator on probe batches without updating anything and return
/// `E(L_G) / E(L_G^a)`; 0 when the auxiliary loss is already negligible.
#[allow(clippy::too_many_arguments)]
pub fn estimate_w_a(
    gen: &ModelParams,
    gcfg: &TransformerConfig,
    disc: &ModelParams,
    dcfg: &TransformerConfig,
    data: &EncodedDataset,
    aux: AuxLoss,
    batch_size: usize,
    n_probe_batches: usize,
    tau: f64,
    seed: u64,
) -> Result<f64, TrainError> {
    require_data(data, "training")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let end = gcfg.vocab_size_with_end - 1;
    let (mut lg_sum, mut aux_sum) = (0.0, 0.0);
    for _ in 0..n_probe_batches.max(1) {
        let mut g = Graph::new();
        let gb = gen.bind_frozen(&mut g);
        let db = disc.bind_frozen(&mut g);
        let fakes = generate_fakes(&mut g, &gb, gcfg, batch_size, tau, &mut rng, &mut Dropout::disabled())?;
        let mut scores = Vec::with_capacity(batch_size);
        for &s in &fakes.seqs {
            let d = discriminator_forward(&mut g, &db, dcfg, s, &mut Dropout::disabled())?;
            scores.push(g.value(d).item());
        }
        let real: Vec<&[usize]> = (0..batch_size)
            .map(|_| data.sequences[rng.gen_range(0..data.len())].as_slice())
            .collect();
        let x = batch_activity_distribution(&real, end);
        let s = batch_activity_distribution(&fakes.ids, end);
        lg_sum += generator_loss(&scores);
        aux_sum += aux.eval(&x, &s, batch_size);
    }
    let n = n_probe_batches.max(1) as f64;
    let (lg, la) = (lg_sum / n, aux_sum / n);
    if la < 1e-9 {
        warn!("auxiliary loss is already {la:.3e}; using w_a = 0");
        return Ok(0.0);
    }
    Ok(lg / la)
}

struct Probe {
    authentic: Vec<Vec<usize>>,
    z: Vec<Vec<usize>>,
}

fn d_accuracy(models: &Models, probe: &Probe) -> Result<f64, TrainError> {
    let end = models.gcfg.vocab_size_with_end - 1;
    let mut correct = 0usize;
    let mut g = Graph::new();
    let gb = models.gen.bind_frozen(&mut g);
    let db = models.disc.bind_frozen(&mut g);
    for ids in &probe.authentic {
        let oh = one_hot_sequence(&mut g, ids, models.dcfg.vocab_size_with_end);
        let d = discriminator_forward(&mut g, &db, &models.dcfg, oh, &mut Dropout::disabled())?;
        correct += usize::from(g.value(d).item() > 0.5);
    }
    for z in &probe.z {
        let out = generator_forward(&mut g, &gb, &models.gcfg, z, SampleMode::Argmax, &mut Dropout::disabled())?;
        let s = truncate_one_hot(&mut g, out.s, end)?;
        let d = discriminator_forward(&mut g, &db, &models.dcfg, s, &mut Dropout::disabled())?;
        correct += usize::from(g.value(d).item() <= 0.5);
    }
    Ok(correct as f64 / (probe.authentic.len() + probe.z.len()) as f64)
}

fn snapshot(
    models: &Models,
    kind: ModelKind,
    train: &EncodedDataset,
    epoch: usize,
    metrics: BTreeMap<String, f64>,
) -> Checkpoint {
    Checkpoint {
        kind,
        config: ModelConfig::Transformer(models.gcfg.clone()),
        vocabulary: train.vocabulary.clone(),
        max_len: train.max_len,
        first_token_counts: first_token_counts(train),
        epoch,
        metrics,
        params: models.gen.clone(),
    }
}

/// Adversarial training with `k` generator epochs per discriminator epoch.
/// `probe` supplies the fixed authentic half of the accuracy probe (the
/// training split is used when it is empty).
pub fn train_adversarial(
    train: &EncodedDataset,
    probe: &EncodedDataset,
    cfg: &GanConfig,
) -> Result<GanOutcome, TrainError> {
    train_adversarial_observed(train, probe, cfg, |_, _| {})
}

/// [`train_adversarial`], calling `observe` after every epoch with its log
/// record and a checkpoint of the current generator.
pub fn train_adversarial_observed(
    train: &EncodedDataset,
    probe: &EncodedDataset,
    cfg: &GanConfig,
    mut observe: impl FnMut(&EpochRecord, &Checkpoint),
) -> Result<GanOutcome, TrainError> {
    cfg.validate()?;
    require_data(train, "training")?;
    let width = train.vocabulary.width();
    let l = train.max_len;
    let kind = cfg.variant.kind();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gcfg = cfg.generator.build(width, l)?;
    let dcfg = cfg.discriminator.build(width, l)?;
    let mut models = Models {
        gen: init_generator(&gcfg, &mut rng),
        disc: init_discriminator(&dcfg, &mut rng),
        gcfg,
        dcfg,
    };
    let probe_src = if probe.is_empty() { train } else { probe };
    let probe = Probe {
        authentic: probe_src.sequences.iter().take(cfg.probe_size).cloned().collect(),
        z: (0..cfg.probe_size).map(|_| sample_random_sequence(width, l, &mut rng)).collect(),
    };

    let aux_kind = cfg.variant.aux_loss();
    let w_a = match (aux_kind, cfg.w_a) {
        (None, _) => 0.0,
        (Some(_), Some(w)) => w,
        (Some(aux), None) => {
            let w = estimate_w_a(
                &models.gen,
                &models.gcfg,
                &models.disc,
                &models.dcfg,
                train,
                aux,
                cfg.batch_size,
                cfg.n_probe_batches,
                cfg.tau,
                rng.gen(),
            )?;
            info!("estimated w_a = {w:.4}");
            w
        }
    };

    let mut opt_g = Adam::new(AdamConfig::with_lr(cfg.lr_g));
    let mut opt_d = Adam::new(AdamConfig::with_lr(cfg.lr_d));
    let mut drop_g = Dropout::new(models.gcfg.dropout_rate, rng.gen());
    let mut drop_d = Dropout::new(models.dcfg.dropout_rate, rng.gen());

    let mut log: Vec<EpochRecord> = Vec::with_capacity(cfg.max_epochs);
    let mut best: Option<(usize, ModelParams, f64)> = None;
    let mut last_good: Option<Checkpoint> = None;
    let with_last_good = |e: TrainError, last_good: &Option<Checkpoint>| match e {
        TrainError::NonFinite { epoch, detail, .. } => TrainError::NonFinite {
            epoch,
            detail,
            last_good: last_good.clone().map(Box::new),
        },
        other => other,
    };

    for epoch in 0..cfg.max_epochs {
        let phase = phase_of(epoch, cfg.k);
        let mut batches = shuffled_batches(train.len(), cfg.batch_size, &mut rng);
        if let Some(steps) = cfg.steps_per_epoch {
            batches.truncate(steps);
        }
        let result = match phase {
            Phase::Generator => generator_epoch(
                &mut models, train, &batches, aux_kind, w_a, cfg, epoch, &mut opt_g, &mut drop_g, &mut rng,
            ),
            Phase::Discriminator => {
                discriminator_epoch(&mut models, train, &batches, cfg, epoch, &mut opt_d, &mut drop_d, &mut rng)
            }
        };
        let mut losses = result.map_err(|e| with_last_good(e, &last_good))?;
        losses.d_accuracy = d_accuracy(&models, &probe)?;
        let window_accuracy = (log.len() + 1 >= cfg.window).then(|| {
            let start = log.len() + 1 - cfg.window;
            let sum: f64 = log[start..].iter().map(|r| r.losses.d_accuracy).sum::<f64>() + losses.d_accuracy;
            sum / cfg.window as f64
        });
        let record = EpochRecord {
            epoch,
            phase,
            losses,
            aux: aux_kind,
            w_a,
            window_accuracy,
        };
        debug!("{}", serde_json::to_string(&record).unwrap_or_default());
        if let Some(acc) = window_accuracy {
            let gap = (acc - 0.5).abs();
            if epoch >= cfg.warmup_epochs && best.as_ref().is_none_or(|(_, _, b)| gap < *b) {
                best = Some((epoch, models.gen.clone(), gap));
            }
        }
        let current = snapshot(&models, kind, train, epoch, BTreeMap::new());
        observe(&record, &current);
        log.push(record);
        last_good = Some(current);
    }

    let final_epoch = cfg.max_epochs.saturating_sub(1);
    let metrics = |epoch: usize| {
        let mut m = BTreeMap::from([("w_a".to_string(), w_a)]);
        if let Some(rec) = log.iter().find(|r| r.epoch == epoch) {
            m.insert("d_accuracy".into(), rec.losses.d_accuracy);
            if let Some(w) = rec.window_accuracy {
                m.insert("window_accuracy".into(), w);
            }
        }
        m
    };
    let last = snapshot(&models, kind, train, final_epoch, metrics(final_epoch));
    let equilibrium = match best {
        Some((epoch, params, _)) => {
            let mut ck = snapshot(&models, kind, train, epoch, metrics(epoch));
            ck.params = params;
            ck
        }
        None => last.clone(),
    };
    info!(
        "adversarial training done: {} epochs, equilibrium at epoch {}",
        log.len(),
        equilibrium.epoch
    );
    Ok(GanOutcome {
        equilibrium,
        last,
        log,
        w_a,
    })
}

#[allow(clippy::too_many_arguments)]
fn generator_epoch(
    models: &mut Models,
    train: &EncodedDataset,
    batches: &[Vec<usize>],
    aux_kind: Option<AuxLoss>,
    w_a: f64,
    cfg: &GanConfig,
    epoch: usize,
    opt: &mut Adam,
    dropout: &mut Dropout,
    rng: &mut ChaCha8Rng,
) -> Result<LossBundle, TrainError> {
    let end = train.end_token_id();
    let (mut lg_sum, mut aux_sum, mut total_sum) = (0.0, 0.0, 0.0);
    for batch in batches {
        let m = batch.len();
        let mut g = Graph::new();
        let gb = models.gen.bind(&mut g);
        let db = models.disc.bind_frozen(&mut g);
        let fakes = generate_fakes(&mut g, &gb, &models.gcfg, m, cfg.tau, rng, dropout)?;
        let mut scores = Vec::with_capacity(m);
        for &s in &fakes.seqs {
            scores.push(discriminator_forward(&mut g, &db, &models.dcfg, s, &mut Dropout::disabled())?);
        }
        let l_g = neg_log_mean(&mut g, &scores, false)?;
        let (total, aux_value) = match aux_kind {
            Some(kind) => {
                let x = batch_activity_distribution(&batch_of(train, batch), end);
                let s = fake_distribution(&mut g, &fakes, end)?;
                let aux = aux_graph(&mut g, kind, &x, s, m)?;
                let weighted = g.scale(aux, w_a);
                (g.add(l_g, weighted)?, g.value(aux).item())
            }
            None => (l_g, 0.0),
        };
        let lg_value = g.value(l_g).item();
        let total_value = g.value(total).item();
        check_finite(epoch, "generator loss", total_value)?;
        g.backward(total)?;
        let grads = gb.grads(&g);
        apply_step(epoch, opt, &mut models.gen, &grads)?;
        lg_sum += lg_value;
        aux_sum += aux_value;
        total_sum += total_value;
    }
    let n = batches.len() as f64;
    Ok(LossBundle {
        l_g: Some(lg_sum / n),
        l_g_aux: aux_kind.map(|_| aux_sum / n),
        l_g_total: Some(total_sum / n),
        l_d: None,
        d_accuracy: 0.0,
    })
}

#[allow(clippy::too_many_arguments)]
fn discriminator_epoch(
    models: &mut Models,
    train: &EncodedDataset,
    batches: &[Vec<usize>],
    cfg: &GanConfig,
    epoch: usize,
    opt: &mut Adam,
    dropout: &mut Dropout,
    rng: &mut ChaCha8Rng,
) -> Result<LossBundle, TrainError> {
    let width = train.vocabulary.width();
    let end = train.end_token_id();
    let mut ld_sum = 0.0;
    for batch in batches {
        let m = batch.len();
        let fake_ids = {
            let mut g = Graph::new();
            let gb = models.gen.bind_frozen(&mut g);
            generate_fakes(&mut g, &gb, &models.gcfg, m, cfg.tau, rng, &mut Dropout::disabled())?.ids
        };
        let mut g = Graph::new();
        let db = models.disc.bind(&mut g);
        let mut real = Vec::with_capacity(m);
        for &i in batch {
            let ids = truncate_at_end(&train.sequences[i], end);
            let oh = one_hot_sequence(&mut g, &ids, width);
            real.push(discriminator_forward(&mut g, &db, &models.dcfg, oh, dropout)?);
        }
        let mut fake = Vec::with_capacity(m);
        for ids in &fake_ids {
            let oh = one_hot_sequence(&mut g, ids, width);
            fake.push(discriminator_forward(&mut g, &db, &models.dcfg, oh, dropout)?);
        }
        let lr = neg_log_mean(&mut g, &real, false)?;
        let lf = neg_log_mean(&mut g, &fake, true)?;
        let l_d = g.add(lr, lf)?;
        let value = g.value(l_d).item();
        check_finite(epoch, "discriminator loss", value)?;
        g.backward(l_d)?;
        let grads = db.grads(&g);
        apply_step(epoch, opt, &mut models.disc, &grads)?;
        ld_sum += value;
    }
    Ok(LossBundle {
        l_g: None,
        l_g_aux: None,
        l_g_total: None,
        l_d: Some(ld_sum / batches.len() as f64),
        d_accuracy: 0.0,
    })
}
