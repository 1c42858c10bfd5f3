//! Quality measures for synthetic traces: length statistics, activity
//! occurrence distance, sequence variety (SPE) and an authenticity scorer.

mod metrics;
mod report;
mod scorer;


use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::event_log::LogError;
use crate::nn::ModelError;
use crate::training::TrainError;

pub use metrics::{length_stats, levenshtein, occurrence_distance, spe, ActivityDistribution, Spe};
pub use report::{build_report, MetricsReport, Provenance};
pub use scorer::{make_negatives, score_synthetic, train_scorer, ScorerBundle, ScorerConfig};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}")]
    Empty(&'static str),
    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),
    #[error("need at least {needed} traces, got {got}")]
    TooFewTraces { needed: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("scorer refuses to score: {0}")]
    UnusableScorer(String),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
