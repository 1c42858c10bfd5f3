use std::path::Path;

use anyhow::{Context, Result};
use procgan::evaluation::ScorerConfig;
use procgan::training::{GanConfig, GenerateOptions, MleConfig, NarConfig};
use procgan::workflow::DiscoveryConfig;
use serde::{Deserialize, Serialize};

/// Everything a run can be configured with, read from one JSON file.
/// Missing keys take their defaults; unknown keys are rejected.
///
/// The run seed overrides the `seed` field of every nested section, so one
/// number reproduces a whole pipeline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Default 0.
    pub seed: u64,
    pub ingest: IngestConfig,
    /// Adversarial training (pgan, pgan-m, pgan-k).
    pub gan: GanConfig,
    /// Teacher-forced training (trans-ar, gru, lstm).
    pub mle: MleConfig,
    /// Plain cross-entropy training of the non-autoregressive Transformer.
    pub nar: NarConfig,
    pub generate: GenerateConfig,
    pub scorer: ScorerConfig,
    pub discovery: DiscoveryConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Padded sequence length; the longest trace when absent.
    pub max_len: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// Default 500.
    pub count: usize,
    /// Autoregressive models take the most likely next token. Default false.
    pub greedy: bool,
    /// Autoregressive models draw their first token from the training
    /// first-token distribution instead of using the most common one. Default false.
    pub sample_first_token: bool,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            count: 500,
            greedy: false,
            sample_first_token: false,
        }
    }
}

impl GenerateConfig {
    pub fn options(&self) -> GenerateOptions {
        GenerateOptions {
            greedy: self.greedy,
            sample_first_token: self.sample_first_token,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Apply the run seed (command line first, then the config file) to every section.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        let seed = seed.unwrap_or(self.seed);
        self.seed = seed;
        self.gan.seed = seed;
        self.mle.seed = seed;
        self.nar.seed = seed;
        self.scorer.seed = seed;
        self
    }
}
