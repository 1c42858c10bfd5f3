use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::event_log::{Trace, Vocabulary};

/// Mean and population standard deviation of trace lengths.
pub fn length_stats(traces: &[Trace]) -> Result<(f64, f64), EvalError> {
    if traces.is_empty() {
        return Err(EvalError::Empty("length statistics need at least one trace"));
    }
    let n = traces.len() as f64;
    let mean = traces.iter().map(|t| t.len() as f64).sum::<f64>() / n;
    let var = traces.iter().map(|t| (t.len() as f64 - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Share of each activity among all events of a set of traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityDistribution {
    pub activities: Vec<String>,
    pub fractions: Vec<f64>,
    pub total: usize,
}

impl ActivityDistribution {
    pub fn from_traces(traces: &[Trace], vocabulary: &Vocabulary) -> Result<Self, EvalError> {
        let mut counts = vec![0usize; vocabulary.size()];
        for t in traces {
            for a in &t.activities {
                let id = vocabulary
                    .id(a)
                    .ok_or_else(|| EvalError::VocabularyMismatch(format!("activity `{a}` is not in the vocabulary")))?;
                counts[id] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        let fractions = counts
            .iter()
            .map(|&c| if total > 0 { c as f64 / total as f64 } else { 0.0 })
            .collect();
        Ok(Self {
            activities: vocabulary.activities().to_vec(),
            fractions,
            total,
        })
    }

    pub fn get(&self, activity: &str) -> Option<f64> {
        self.activities.iter().position(|a| a == activity).map(|i| self.fractions[i])
    }
}

/// L1 distance between two activity distributions over the same vocabulary.
pub fn occurrence_distance(x: &ActivityDistribution, s: &ActivityDistribution) -> Result<f64, EvalError> {
    if x.activities != s.activities {
        return Err(EvalError::VocabularyMismatch(
            "distributions are over different vocabularies".into(),
        ));
    }
    Ok(x.fractions.iter().zip(&s.fractions).map(|(a, b)| (a - b).abs()).sum())
}

/// Minimal number of insertions, deletions and substitutions turning `a` into `b`.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spe {
    pub value: f64,
    /// Pairs of two empty sequences, which have no normalizer.
    pub skipped_pairs: usize,
}

/// Sum of pairwise normalized edit distances,
/// `(1/N^2) * sum_{i<j} ED(s_i, s_j) / (len_i + len_j)`.
pub fn spe<T: PartialEq, S: AsRef<[T]>>(sequences: &[S]) -> Result<Spe, EvalError> {
    let n = sequences.len();
    if n < 2 {
        return Err(EvalError::TooFewTraces { needed: 2, got: n });
    }
    let mut sum = 0.0;
    let mut skipped = 0;
    for i in 0..n {
        let a = sequences[i].as_ref();
        for b in &sequences[i + 1..] {
            let b = b.as_ref();
            let norm = a.len() + b.len();
            if norm == 0 {
                skipped += 1;
                continue;
            }
            sum += levenshtein(a, b) as f64 / norm as f64;
        }
    }
    Ok(Spe {
        value: sum / (n * n) as f64,
        skipped_pairs: skipped,
    })
}
