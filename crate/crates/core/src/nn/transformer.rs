use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Bound, ModelError, ModelParams};
use crate::autodiff::{Axis, Graph, Tensor, Var};

const LN_EPS: f64 = 1e-5;
const MASKED: f64 = -1e9;
const MIN_EMBED_DIM: usize = 8;

/// Shape of a Transformer encoder stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerConfig {
    pub n_blocks: usize,
    pub n_heads: usize,
    pub embed_dim: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    /// Number of ids, end token included (N_v + 1).
    pub vocab_size_with_end: usize,
    pub dropout_rate: f64,
    #[serde(default = "default_true")]
    pub positional_encoding: bool,
}

fn default_true() -> bool {
    true
}

impl TransformerConfig {
    /// Defaults for a vocabulary of `vocab_width` ids (end included):
    /// 2 blocks, 2 heads, embedding `round(sqrt(N_v))` raised to at least 8 and
    /// to a multiple of the head count, feed-forward `4 x embed`, dropout 0.1.
    pub fn for_vocab(vocab_width: usize, max_len: usize) -> Self {
        let n_heads = 2;
        let n_v = vocab_width.saturating_sub(1).max(1);
        let mut embed_dim = ((n_v as f64).sqrt().round() as usize).max(MIN_EMBED_DIM);
        embed_dim = embed_dim.div_ceil(n_heads) * n_heads;
        Self {
            n_blocks: 2,
            n_heads,
            embed_dim,
            ff_dim: 4 * embed_dim,
            max_len,
            vocab_size_with_end: vocab_width,
            dropout_rate: 0.1,
            positional_encoding: true,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.n_heads == 0 || self.embed_dim == 0 || self.ff_dim == 0 {
            return bad("dimensions must be positive".into());
        }
        if !self.embed_dim.is_multiple_of(self.n_heads) {
            return bad(format!(
                "embed_dim {} is not divisible by n_heads {}",
                self.embed_dim, self.n_heads
            ));
        }
        if self.max_len == 0 || self.vocab_size_with_end < 2 {
            return bad("max_len must be >= 1 and the vocabulary must hold an activity and the end token".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.n_heads
    }

    /// Scalars in one encoder block: Q/K/V/O projections with biases, two
    /// layer-norm gain/bias pairs and the two feed-forward layers.
    pub fn block_param_count(&self) -> usize {
        let (d, f) = (self.embed_dim, self.ff_dim);
        4 * (d * d + d) + 4 * d + (d * f + f) + (f * d + d)
    }

    pub fn encoder_param_count(&self) -> usize {
        self.vocab_size_with_end * self.embed_dim + self.n_blocks * self.block_param_count()
    }

    /// Encoder plus the per-position `d x V` output layer.
    pub fn generator_param_count(&self) -> usize {
        self.encoder_param_count() + self.embed_dim * self.vocab_size_with_end + self.vocab_size_with_end
    }

    pub fn discriminator_param_count(&self) -> usize {
        self.encoder_param_count() + self.embed_dim + 1
    }

    pub fn classifier_param_count(&self, hidden: usize) -> usize {
        let features = self.embed_dim + self.vocab_size_with_end + 1;
        self.encoder_param_count() + features * hidden + hidden + hidden + 1
    }
}

/// Inverted dropout; a disabled instance is the identity.
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn disabled() -> Self {
        Self { rate: 0.0, rng: None }
    }

    pub fn new(rate: f64, seed: u64) -> Self {
        Self {
            rate,
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn apply(&mut self, g: &mut Graph, x: Var) -> Result<Var, ModelError> {
        let Some(rng) = self.rng.as_mut().filter(|_| self.rate > 0.0) else {
            return Ok(x);
        };
        let [r, c] = g.shape(x);
        let keep = 1.0 - self.rate;
        let mask = Tensor::from_fn(r, c, |_, _| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 });
        let mask = g.constant(mask);
        Ok(g.mul(x, mask)?)
    }
}

/// Fixed sinusoidal position table, `max_len x dim`.
pub fn positional_encoding(max_len: usize, dim: usize) -> Tensor {
    Tensor::from_fn(max_len, dim, |pos, i| {
        let pair = (i / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * pair / dim as f64);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Additive attention mask letting position `i` see positions `<= i` only.
pub fn causal_mask(len: usize) -> Tensor {
    Tensor::from_fn(len, len, |i, j| if j > i { MASKED } else { 0.0 })
}

pub(crate) fn init_encoder<R: Rng + ?Sized>(params: &mut ModelParams, cfg: &TransformerConfig, rng: &mut R) {
    let (d, f, v) = (cfg.embed_dim, cfg.ff_dim, cfg.vocab_size_with_end);
    params.init_normal("embed", v, d, 1.0, rng);
    for b in 0..cfg.n_blocks {
        let p = |s: &str| format!("block{b}.{s}");
        for w in ["wq", "wk", "wv", "wo"] {
            params.init_xavier(&p(w), d, d, rng);
        }
        for bias in ["bq", "bk", "bv", "bo"] {
            params.init_const(&p(bias), 1, d, 0.0);
        }
        params.init_const(&p("ln1.gain"), 1, d, 1.0);
        params.init_const(&p("ln1.bias"), 1, d, 0.0);
        params.init_xavier(&p("ff1.w"), d, f, rng);
        params.init_const(&p("ff1.b"), 1, f, 0.0);
        params.init_xavier(&p("ff2.w"), f, d, rng);
        params.init_const(&p("ff2.b"), 1, d, 0.0);
        params.init_const(&p("ln2.gain"), 1, d, 1.0);
        params.init_const(&p("ln2.bias"), 1, d, 0.0);
    }
}

pub(crate) fn linear(g: &mut Graph, p: &Bound, x: Var, w: &str, b: &str) -> Result<Var, ModelError> {
    let y = g.matmul(x, p.get(w)?)?;
    Ok(g.add(y, p.get(b)?)?)
}

fn norm(g: &mut Graph, p: &Bound, x: Var, prefix: &str) -> Result<Var, ModelError> {
    let n = g.layer_norm(x, LN_EPS);
    let n = g.mul(n, p.get(&format!("{prefix}.gain"))?)?;
    Ok(g.add(n, p.get(&format!("{prefix}.bias"))?)?)
}

/// Run the encoder stack over already-embedded inputs `x` (`max_len x d`).
/// Adds the positional encoding (when enabled), then `n_blocks` post-norm
/// blocks of multi-head self-attention and a ReLU feed-forward layer.
pub fn encode(
    g: &mut Graph,
    p: &Bound,
    cfg: &TransformerConfig,
    x: Var,
    causal: bool,
    dropout: &mut Dropout,
) -> Result<Var, ModelError> {
    let [rows, cols] = g.shape(x);
    if rows != cfg.max_len {
        return Err(ModelError::InputLength {
            expected: cfg.max_len,
            got: rows,
        });
    }
    if cols != cfg.embed_dim {
        return Err(ModelError::InvalidConfig(format!(
            "embedded input has width {cols}, config says {}",
            cfg.embed_dim
        )));
    }
    let mut h = x;
    if cfg.positional_encoding {
        let pe = g.constant(positional_encoding(cfg.max_len, cfg.embed_dim));
        h = g.add(h, pe)?;
    }
    h = dropout.apply(g, h)?;
    let mask = causal.then(|| g.constant(causal_mask(cfg.max_len)));
    for b in 0..cfg.n_blocks {
        let name = |s: &str| format!("block{b}.{s}");
        let attn = self_attention(g, p, cfg, h, mask, b)?;
        let attn = dropout.apply(g, attn)?;
        let res = g.add(h, attn)?;
        let h1 = norm(g, p, res, &name("ln1"))?;
        let ff = linear(g, p, h1, &name("ff1.w"), &name("ff1.b"))?;
        let ff = g.relu(ff);
        let ff = linear(g, p, ff, &name("ff2.w"), &name("ff2.b"))?;
        let ff = dropout.apply(g, ff)?;
        let res = g.add(h1, ff)?;
        h = norm(g, p, res, &name("ln2"))?;
    }
    Ok(h)
}

fn self_attention(
    g: &mut Graph,
    p: &Bound,
    cfg: &TransformerConfig,
    x: Var,
    mask: Option<Var>,
    block: usize,
) -> Result<Var, ModelError> {
    let name = |s: &str| format!("block{block}.{s}");
    let q = linear(g, p, x, &name("wq"), &name("bq"))?;
    let k = linear(g, p, x, &name("wk"), &name("bk"))?;
    let v = linear(g, p, x, &name("wv"), &name("bv"))?;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = Vec::with_capacity(cfg.n_heads);
    for hd in 0..cfg.n_heads {
        let (lo, hi) = (hd * dh, (hd + 1) * dh);
        let qh = g.slice_cols(q, lo, hi)?;
        let kh = g.slice_cols(k, lo, hi)?;
        let vh = g.slice_cols(v, lo, hi)?;
        let kt = g.transpose(kh);
        let scores = g.matmul(qh, kt)?;
        let mut scores = g.scale(scores, scale);
        if let Some(m) = mask {
            scores = g.add(scores, m)?;
        }
        let weights = g.softmax(scores, Axis::Cols);
        heads.push(g.matmul(weights, vh)?);
    }
    let joined = if heads.len() == 1 {
        heads[0]
    } else {
        g.concat(&heads, Axis::Cols)?
    };
    linear(g, p, joined, &name("wo"), &name("bo"))
}
