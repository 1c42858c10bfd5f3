use rand::Rng;

use super::transformer::{init_encoder, linear};
use super::{encode, Bound, Dropout, ModelError, ModelParams, TransformerConfig};
use crate::autodiff::{Axis, Graph, Tensor, Var};
use crate::event_log::{first_end, truncate_at_end};

const HEAD_INIT_STD: f64 = 0.02;

pub fn init_generator<R: Rng + ?Sized>(cfg: &TransformerConfig, rng: &mut R) -> ModelParams {
    let mut p = ModelParams::new();
    init_encoder(&mut p, cfg, rng);
    p.init_normal("out.w", cfg.embed_dim, cfg.vocab_size_with_end, HEAD_INIT_STD, rng);
    p.init_const("out.b", 1, cfg.vocab_size_with_end, 0.0);
    p
}

/// The autoregressive Transformer shares the generator's layout; only the
/// attention mask differs.
pub fn init_ar<R: Rng + ?Sized>(cfg: &TransformerConfig, rng: &mut R) -> ModelParams {
    init_generator(cfg, rng)
}

pub fn init_discriminator<R: Rng + ?Sized>(cfg: &TransformerConfig, rng: &mut R) -> ModelParams {
    let mut p = ModelParams::new();
    init_encoder(&mut p, cfg, rng);
    p.init_normal("head.w", cfg.embed_dim, 1, HEAD_INIT_STD, rng);
    p.init_const("head.b", 1, 1, 0.0);
    p
}

pub fn init_classifier<R: Rng + ?Sized>(cfg: &TransformerConfig, hidden: usize, rng: &mut R) -> ModelParams {
    let mut p = ModelParams::new();
    init_encoder(&mut p, cfg, rng);
    let features = cfg.embed_dim + cfg.vocab_size_with_end + 1;
    p.init_xavier("dense1.w", features, hidden, rng);
    p.init_const("dense1.b", 1, hidden, 0.0);
    p.init_normal("dense2.w", hidden, 1, HEAD_INIT_STD, rng);
    p.init_const("dense2.b", 1, 1, 0.0);
    p
}

fn check_len(ids: &[usize], cfg: &TransformerConfig) -> Result<(), ModelError> {
    if ids.len() != cfg.max_len {
        return Err(ModelError::InputLength {
            expected: cfg.max_len,
            got: ids.len(),
        });
    }
    Ok(())
}

/// Per-position logits (`max_len x V`) of the generator for random input `z`.
pub fn generator_logits(
    g: &mut Graph,
    p: &Bound,
    cfg: &TransformerConfig,
    z: &[usize],
    dropout: &mut Dropout,
) -> Result<Var, ModelError> {
    check_len(z, cfg)?;
    let x = g.embedding(p.get("embed")?, z)?;
    let h = encode(g, p, cfg, x, false, dropout)?;
    linear(g, p, h, "out.w", "out.b")
}

/// How the generator turns its distributions into a one-hot sequence.
#[derive(Debug, Clone, Copy)]
pub enum SampleMode<'a> {
    /// Straight-through Gumbel-Softmax with the given noise: the forward
    /// value is a Gumbel-max sample.
    Gumbel { noise: &'a Tensor, tau: f64 },
    /// Forward value is `argmax h`; the backward pass is the Gumbel-Softmax
    /// relaxation with the given noise.
    ArgmaxSt { noise: &'a Tensor, tau: f64 },
    /// Plain row-wise argmax of `h`, no gradient (sampling).
    Argmax,
}

#[derive(Debug, Clone, Copy)]
pub struct GeneratorOutput {
    pub logits: Var,
    /// Row-wise probability distributions over the vocabulary.
    pub h: Var,
    /// One-hot sequence.
    pub s: Var,
}

pub fn generator_forward(
    g: &mut Graph,
    p: &Bound,
    cfg: &TransformerConfig,
    z: &[usize],
    mode: SampleMode<'_>,
    dropout: &mut Dropout,
) -> Result<GeneratorOutput, ModelError> {
    let logits = generator_logits(g, p, cfg, z, dropout)?;
    let h = g.softmax(logits, Axis::Cols);
    let s = match mode {
        SampleMode::Gumbel { noise, tau } => g.gumbel_softmax_st(logits, noise, tau)?,
        SampleMode::ArgmaxSt { noise, tau } => g.argmax_st(logits, noise, tau)?,
        SampleMode::Argmax => {
            let ids = g.value(h).argmax_rows();
            g.constant(Tensor::one_hot(&ids, cfg.vocab_size_with_end))
        }
    };
    Ok(GeneratorOutput { logits, h, s })
}

pub fn one_hot_sequence(g: &mut Graph, ids: &[usize], width: usize) -> Var {
    g.constant(Tensor::one_hot(ids, width))
}

/// Replace every row after the first end-token row with the end one-hot.
/// Rows up to and including the first end token keep their gradient path.
pub fn truncate_one_hot(g: &mut Graph, s: Var, end_token_id: usize) -> Result<Var, ModelError> {
    let value = g.value(s);
    let [rows, width] = value.shape();
    let ids = value.argmax_rows();
    let cut = first_end(&ids, end_token_id);
    if cut + 1 >= rows {
        return Ok(s);
    }
    let keep = Tensor::from_fn(rows, width, |r, _| if r <= cut { 1.0 } else { 0.0 });
    let fill = Tensor::from_fn(rows, width, |r, c| {
        if r > cut && c == end_token_id {
            1.0
        } else {
            0.0
        }
    });
    let keep = g.constant(keep);
    let fill = g.constant(fill);
    let kept = g.mul(s, keep)?;
    Ok(g.add(kept, fill)?)
}

/// Mean-pooling weights over positions `0..=first_end` (all positions when
/// the sequence has no end token), as a `1 x len` row.
pub fn pooling_weights(first_end: usize, len: usize) -> Tensor {
    let count = (first_end + 1).min(len);
    Tensor::from_fn(1, len, |_, c| if c < count { 1.0 / count as f64 } else { 0.0 })
}

/// Probability that a (truncated) one-hot sequence is authentic.
pub fn discriminator_forward(
    g: &mut Graph,
    p: &Bound,
    cfg: &TransformerConfig,
    one_hot: Var,
    dropout: &mut Dropout,
) -> Result<Var, ModelError> {
    let [rows, width] = g.shape(one_hot);
    if rows != cfg.max_len || width != cfg.vocab_size_with_end {
        return Err(ModelError::InputLength {
            expected: cfg.max_len,
            got: rows,
        });
    }
    let ids = g.value(one_hot).argmax_rows();
    let cut = first_end(&ids, cfg.vocab_size_with_end - 1);
    let x = g.matmul(one_hot, p.get("embed")?)?;
    let h = encode(g, p, cfg, x, false, dropout)?;
    let w = g.constant(pooling_weights(cut, rows));
    let pooled = g.matmul(w, h)?;
    let logit = linear(g, p, pooled, "head.w", "head.b")?;
    Ok(g.sigmoid(logit))
}

/// Frequency of each id among the tokens before the first end token (the end
/// entry stays 0), and that length as a fraction of the padded length.
pub fn frequency_features(ids: &[usize], vocab_width: usize) -> (Vec<f64>, f64) {
    let end = vocab_width - 1;
    let len = first_end(ids, end);
    let mut freq = vec![0.0; vocab_width];
    for &id in &ids[..len] {
        freq[id] += 1.0;
    }
    if len > 0 {
        for f in &mut freq {
            *f /= len as f64;
        }
    }
    (freq, len as f64 / ids.len().max(1) as f64)
}

/// The classifier's dense-layer input: pooled encoder output, frequency vector
/// and normalized length, side by side (`1 x (d + V + 1)`).
pub fn classifier_features(
    g: &mut Graph,
    p: &Bound,
    cfg: &TransformerConfig,
    ids: &[usize],
    dropout: &mut Dropout,
) -> Result<Var, ModelError> {
    check_len(ids, cfg)?;
    let end = cfg.vocab_size_with_end - 1;
    let ids = truncate_at_end(ids, end);
    let cut = first_end(&ids, end);
    let x = g.embedding(p.get("embed")?, &ids)?;
    let h = encode(g, p, cfg, x, false, dropout)?;
    let w = g.constant(pooling_weights(cut, ids.len()));
    let pooled = g.matmul(w, h)?;
    let (mut extra, len_frac) = frequency_features(&ids, cfg.vocab_size_with_end);
    extra.push(len_frac);
    let extra = g.constant(Tensor::row(extra));
    Ok(g.concat(&[pooled, extra], Axis::Cols)?)
}

/// Probability that an id sequence is authentic.
pub fn classifier_forward(
    g: &mut Graph,
    p: &Bound,
    cfg: &TransformerConfig,
    ids: &[usize],
    dropout: &mut Dropout,
) -> Result<Var, ModelError> {
    let features = classifier_features(g, p, cfg, ids, dropout)?;
    let hidden = linear(g, p, features, "dense1.w", "dense1.b")?;
    let hidden = g.relu(hidden);
    let logit = linear(g, p, hidden, "dense2.w", "dense2.b")?;
    Ok(g.sigmoid(logit))
}

/// Next-token logits of the causal Transformer: row `i` predicts id `i + 1`.
pub fn ar_logits(
    g: &mut Graph,
    p: &Bound,
    cfg: &TransformerConfig,
    ids: &[usize],
    dropout: &mut Dropout,
) -> Result<Var, ModelError> {
    check_len(ids, cfg)?;
    let x = g.embedding(p.get("embed")?, ids)?;
    let h = encode(g, p, cfg, x, true, dropout)?;
    linear(g, p, h, "out.w", "out.b")
}
