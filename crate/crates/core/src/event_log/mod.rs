//! Event-log ingestion, activity encoding, splitting and dataset persistence.

mod csv_log;
mod dataset;
mod vocab;
mod xes;

pub use csv_log::{parse_csv, write_csv, CsvOptions};
pub use dataset::{load_dataset, read_id_sequences, save_dataset, split_dataset, DatasetSplit, PreparedDataset};
pub use vocab::{
    decode, encode_and_pad, first_end, sample_random_sequence, truncate_at_end, EncodedDataset, Vocabulary,
};
pub use xes::parse_xes;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One case of a process: its activity labels in execution order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub case_id: String,
    pub activities: Vec<String>,
}

impl Trace {
    pub fn new(case_id: impl Into<String>, activities: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            case_id: case_id.into(),
            activities: activities.into_iter().map(Into::into).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.activities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activities.is_empty()
    }
}

/// Traces parsed from a file, with counts of what was skipped on the way.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedLog {
    pub traces: Vec<Trace>,
    /// Events without an activity label.
    pub skipped_events: usize,
    /// Traces left with no activities.
    pub dropped_traces: usize,
}

impl ParsedLog {
    pub fn warning_count(&self) -> usize {
        self.skipped_events + self.dropped_traces
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: missing required column `{column}`")]
    MissingColumn { line: u64, column: String },
    #[error("input contains no events")]
    Empty,
    #[error("malformed XML at byte {position}: {message}")]
    Xml { position: u64, message: String },
    #[error("unknown activity `{0}`")]
    UnknownActivity(String),
    #[error("trace of length {len} exceeds maximum length {max_len}")]
    TooLong { len: usize, max_len: usize },
    #[error("need at least {needed} traces, got {got}")]
    TooFewTraces { needed: usize, got: usize },
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
