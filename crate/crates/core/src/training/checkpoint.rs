use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::event_log::Vocabulary;
use crate::nn::{init_ar, init_generator, init_recurrent, ModelParams, RecurrentConfig, TransformerConfig};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PGCKPT01";
const MANIFEST_FORMAT: &str = "procgan-checkpoint/1";

/// Which generator a checkpoint holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Pgan,
    PganM,
    PganK,
    TransNar,
    TransAr,
    Gru,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Pgan,
        ModelKind::PganM,
        ModelKind::PganK,
        ModelKind::TransNar,
        ModelKind::TransAr,
        ModelKind::Gru,
        ModelKind::Lstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Pgan => "pgan",
            ModelKind::PganM => "pgan_m",
            ModelKind::PganK => "pgan_k",
            ModelKind::TransNar => "trans_nar",
            ModelKind::TransAr => "trans_ar",
            ModelKind::Gru => "gru",
            ModelKind::Lstm => "lstm",
        }
    }

    /// Generates token by token from an initial activity.
    pub fn is_autoregressive(self) -> bool {
        matches!(self, ModelKind::TransAr | ModelKind::Gru | ModelKind::Lstm)
    }

    pub fn is_gan(self) -> bool {
        matches!(self, ModelKind::Pgan | ModelKind::PganM | ModelKind::PganK)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| {
                let names: Vec<_> = ModelKind::ALL.iter().map(|k| k.name()).collect();
                format!("unknown model `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "config", rename_all = "snake_case")]
pub enum ModelConfig {
    Transformer(TransformerConfig),
    Recurrent(RecurrentConfig),
}

impl ModelConfig {
    pub fn vocab_width(&self) -> usize {
        match self {
            ModelConfig::Transformer(c) => c.vocab_size_with_end,
            ModelConfig::Recurrent(c) => c.vocab_size_with_end,
        }
    }
}

/// A trained generator together with everything needed to sample from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub vocabulary: Vocabulary,
    pub max_len: usize,
    /// How often each id starts a training trace (autoregressive seeding).
    pub first_token_counts: Vec<u64>,
    pub epoch: usize,
    pub metrics: BTreeMap<String, f64>,
    pub params: ModelParams,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("checkpoint truncated: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("checkpoint has {0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("invalid checkpoint manifest: {0}")]
    Manifest(String),
    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    kind: ModelKind,
    model: ModelConfig,
    vocabulary: Vocabulary,
    max_len: usize,
    first_token_counts: Vec<u64>,
    epoch: usize,
    metrics: BTreeMap<String, f64>,
    tensors: Vec<TensorDescriptor>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorDescriptor {
    name: String,
    shape: [usize; 2],
}

/// Parameter names and shapes a model of this kind and config must have.
pub fn expected_layout(kind: ModelKind, config: &ModelConfig) -> Result<ModelParams, CheckpointError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mismatch = |msg: &str| Err(CheckpointError::ShapeMismatch(format!("{kind} {msg}")));
    match (kind, config) {
        (ModelKind::Gru | ModelKind::Lstm, ModelConfig::Recurrent(c)) => {
            let expected_cell = if kind == ModelKind::Gru {
                crate::nn::CellKind::Gru
            } else {
                crate::nn::CellKind::Lstm
            };
            if c.cell != expected_cell {
                return mismatch("checkpoint declares the wrong cell type");
            }
            Ok(init_recurrent(c, &mut rng))
        }
        (ModelKind::TransAr, ModelConfig::Transformer(c)) => Ok(init_ar(c, &mut rng)),
        (_, ModelConfig::Transformer(c)) if !kind.is_autoregressive() => Ok(init_generator(c, &mut rng)),
        _ => mismatch("checkpoint has a config of the wrong model family"),
    }
}

impl Checkpoint {
    /// Check that parameters, config and vocabulary agree with each other.
    pub fn validate(&self) -> Result<(), CheckpointError> {
        if self.config.vocab_width() != self.vocabulary.width() {
            return Err(CheckpointError::ShapeMismatch(format!(
                "config vocabulary width {} but vocabulary has {} ids",
                self.config.vocab_width(),
                self.vocabulary.width()
            )));
        }
        if let ModelConfig::Transformer(c) = &self.config {
            if c.max_len != self.max_len {
                return Err(CheckpointError::ShapeMismatch(format!(
                    "config max_len {} but checkpoint max_len {}",
                    c.max_len, self.max_len
                )));
            }
        }
        let expected = expected_layout(self.kind, &self.config)?;
        if expected.len() != self.params.len() {
            return Err(CheckpointError::ShapeMismatch(format!(
                "expected {} tensors, found {}",
                expected.len(),
                self.params.len()
            )));
        }
        for ((en, et), (an, at)) in expected.iter().zip(self.params.iter()) {
            if en != an || et.shape() != at.shape() {
                return Err(CheckpointError::ShapeMismatch(format!(
                    "expected `{en}` {:?}, found `{an}` {:?}",
                    et.shape(),
                    at.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let manifest = Manifest {
            format: MANIFEST_FORMAT.to_string(),
            kind: self.kind,
            model: self.config.clone(),
            vocabulary: self.vocabulary.clone(),
            max_len: self.max_len,
            first_token_counts: self.first_token_counts.clone(),
            epoch: self.epoch,
            metrics: self.metrics.clone(),
            tensors: self
                .params
                .iter()
                .map(|(name, t)| TensorDescriptor {
                    name: name.clone(),
                    shape: t.shape(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&manifest).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        let json_len = u32::try_from(json.len()).map_err(|_| CheckpointError::Manifest("manifest too large".into()))?;
        let mut out = Vec::with_capacity(12 + json.len() + 4 * self.params.param_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&json_len.to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in self.params.iter() {
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let need = |needed: usize| {
            if bytes.len() < needed {
                Err(CheckpointError::Truncated {
                    needed,
                    found: bytes.len(),
                })
            } else {
                Ok(())
            }
        };
        need(12)?;
        let json_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        need(12 + json_len)?;
        let manifest: Manifest =
            serde_json::from_slice(&bytes[12..12 + json_len]).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(CheckpointError::Manifest(format!("unsupported format `{}`", manifest.format)));
        }
        let expected = expected_layout(manifest.kind, &manifest.model)?;
        if manifest.tensors.len() != expected.len() {
            return Err(CheckpointError::ShapeMismatch(format!(
                "manifest declares {} tensors, {} requires {}",
                manifest.tensors.len(),
                manifest.kind,
                expected.len()
            )));
        }
        let mut offset = 12 + json_len;
        let mut params = ModelParams::new();
        for desc in &manifest.tensors {
            let [r, c] = desc.shape;
            let end = offset + 4 * r * c;
            need(end)?;
            let data = bytes[offset..end]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
                .collect();
            params.insert(desc.name.clone(), Tensor::new(r, c, data));
            offset = end;
        }
        if offset != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - offset));
        }
        let ckpt = Checkpoint {
            kind: manifest.kind,
            config: manifest.model,
            vocabulary: manifest.vocabulary,
            max_len: manifest.max_len,
            first_token_counts: manifest.first_token_counts,
            epoch: manifest.epoch,
            metrics: manifest.metrics,
            params,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
