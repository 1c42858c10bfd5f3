use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LogError, Trace};

/// Index-based activity encoding. Named activities take ids `0..size()` in
/// first-appearance order; `end_token_id() == size()` marks termination and
/// fills the padding tail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    activities: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(names: Vec<String>) -> Self {
        let mut vocab = Vocabulary {
            activities: Vec::new(),
            index: HashMap::new(),
        };
        for name in names {
            vocab.insert(&name);
        }
        vocab
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.activities
    }
}

impl Vocabulary {
    pub fn build<'a>(traces: impl IntoIterator<Item = &'a Trace>) -> Self {
        let mut vocab = Vocabulary::from(Vec::new());
        for t in traces {
            for a in &t.activities {
                vocab.insert(a);
            }
        }
        vocab
    }

    fn insert(&mut self, name: &str) {
        if !self.index.contains_key(name) {
            self.index.insert(name.to_string(), self.activities.len());
            self.activities.push(name.to_string());
        }
    }

    /// Number of named activities (N_v).
    pub fn size(&self) -> usize {
        self.activities.len()
    }

    pub fn end_token_id(&self) -> usize {
        self.activities.len()
    }

    /// Number of ids including the end token.
    pub fn width(&self) -> usize {
        self.activities.len() + 1
    }

    pub fn activities(&self) -> &[String] {
        &self.activities
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.activities.get(id).map(String::as_str)
    }

    pub fn encode(&self, activities: &[String]) -> Result<Vec<usize>, LogError> {
        activities
            .iter()
            .map(|a| self.id(a).ok_or_else(|| LogError::UnknownActivity(a.clone())))
            .collect()
    }
}

/// Activity ids followed by end tokens up to exactly `max_len` entries.
pub fn encode_and_pad(activities: &[String], vocab: &Vocabulary, max_len: usize) -> Result<Vec<usize>, LogError> {
    if activities.len() > max_len {
        return Err(LogError::TooLong {
            len: activities.len(),
            max_len,
        });
    }
    let mut ids = vocab.encode(activities)?;
    ids.resize(max_len, vocab.end_token_id());
    Ok(ids)
}

/// Activity names up to (not including) the first end token.
pub fn decode(ids: &[usize], vocab: &Vocabulary) -> Vec<String> {
    ids.iter()
        .map_while(|&id| vocab.name(id))
        .map(str::to_string)
        .collect()
}

/// Position of the first end token, or `ids.len()` when there is none.
pub fn first_end(ids: &[usize], end_token_id: usize) -> usize {
    ids.iter().position(|&id| id == end_token_id).unwrap_or(ids.len())
}

/// Replace everything after the first end token by end tokens.
pub fn truncate_at_end(ids: &[usize], end_token_id: usize) -> Vec<usize> {
    let cut = first_end(ids, end_token_id);
    let mut out = ids.to_vec();
    out[cut..].fill(end_token_id);
    out
}

/// `len` ids drawn independently and uniformly from `0..=end_token_id`.
pub fn sample_random_sequence<R: Rng + ?Sized>(vocab_width: usize, len: usize, rng: &mut R) -> Vec<usize> {
    (0..len).map(|_| rng.gen_range(0..vocab_width)).collect()
}

/// Fixed-length encoded sequences sharing one vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub sequences: Vec<Vec<usize>>,
    pub max_len: usize,
    pub vocabulary: Vocabulary,
}

impl EncodedDataset {
    pub fn encode(traces: &[Trace], vocabulary: &Vocabulary, max_len: usize) -> Result<Self, LogError> {
        let sequences = traces
            .iter()
            .map(|t| encode_and_pad(&t.activities, vocabulary, max_len))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            sequences,
            max_len,
            vocabulary: vocabulary.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn end_token_id(&self) -> usize {
        self.vocabulary.end_token_id()
    }

    pub fn decoded(&self) -> Vec<Vec<String>> {
        self.sequences.iter().map(|s| decode(s, &self.vocabulary)).collect()
    }
}
