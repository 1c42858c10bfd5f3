use serde::{Deserialize, Serialize};

use super::{length_stats, occurrence_distance, spe, ActivityDistribution, EvalError, ScorerBundle};
use crate::event_log::{Trace, Vocabulary};

/// Where a synthetic sample came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: Option<String>,
    pub checkpoint: Option<String>,
    pub seed: Option<u64>,
}

/// All quality measures for one synthetic sample against an authentic one.
/// Serializes to a flat JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub model: Option<String>,
    pub checkpoint: Option<String>,
    pub seed: Option<u64>,
    pub n_authentic: usize,
    pub n_synthetic: usize,
    /// Synthetic traces with no activity; left out of lengths and SPE.
    pub n_empty_synthetic: usize,
    pub authentic_length_mean: f64,
    pub authentic_length_std: f64,
    pub synthetic_length_mean: Option<f64>,
    pub synthetic_length_std: Option<f64>,
    pub occurrence_distance: f64,
    pub authentic_spe: f64,
    pub synthetic_spe: Option<f64>,
    pub spe_skipped_pairs: usize,
    pub scorer_f1: Option<f64>,
    pub fpr: Option<f64>,
    pub scorer_diagnostic: Option<String>,
}

impl MetricsReport {
    /// `|SPE_synthetic - SPE_authentic|`, when both exist.
    pub fn spe_gap(&self) -> Option<f64> {
        self.synthetic_spe.map(|s| (s - self.authentic_spe).abs())
    }
}

fn id_sequences(traces: &[&Trace], vocabulary: &Vocabulary) -> Result<Vec<Vec<usize>>, EvalError> {
    traces
        .iter()
        .map(|t| vocabulary.encode(&t.activities).map_err(EvalError::from))
        .collect()
}

/// Compare `synthetic` against `authentic` (normally the held-out test
/// split). An unusable scorer leaves `fpr` empty and records why.
pub fn build_report(
    authentic: &[Trace],
    synthetic: &[Trace],
    vocabulary: &Vocabulary,
    scorer: Option<&ScorerBundle>,
    provenance: &Provenance,
) -> Result<MetricsReport, EvalError> {
    if authentic.is_empty() {
        return Err(EvalError::Empty("no authentic traces to compare against"));
    }
    if synthetic.is_empty() {
        return Err(EvalError::Empty("no synthetic traces to evaluate"));
    }
    let real: Vec<&Trace> = authentic.iter().filter(|t| !t.is_empty()).collect();
    let fake: Vec<&Trace> = synthetic.iter().filter(|t| !t.is_empty()).collect();
    let owned = |ts: &[&Trace]| ts.iter().map(|&t| t.clone()).collect::<Vec<_>>();

    let (a_mean, a_std) = length_stats(authentic)?;
    let fake_owned = owned(&fake);
    let (s_mean, s_std) = match length_stats(&fake_owned) {
        Ok((m, s)) => (Some(m), Some(s)),
        Err(EvalError::Empty(_)) => (None, None),
        Err(e) => return Err(e),
    };
    let occ = occurrence_distance(
        &ActivityDistribution::from_traces(authentic, vocabulary)?,
        &ActivityDistribution::from_traces(synthetic, vocabulary)?,
    )?;
    let a_spe = spe(&id_sequences(&real, vocabulary)?)?;
    let s_spe = match spe(&id_sequences(&fake, vocabulary)?) {
        Ok(s) => Some(s),
        Err(EvalError::TooFewTraces { .. }) => None,
        Err(e) => return Err(e),
    };

    let (scorer_f1, fpr, scorer_diagnostic) = match scorer {
        None => (None, None, None),
        Some(b) if !b.is_usable() => (Some(b.f1), None, b.diagnostic.clone()),
        Some(b) => (Some(b.f1), Some(super::score_synthetic(b, synthetic)?), None),
    };
    Ok(MetricsReport {
        model: provenance.model.clone(),
        checkpoint: provenance.checkpoint.clone(),
        seed: provenance.seed,
        n_authentic: authentic.len(),
        n_synthetic: synthetic.len(),
        n_empty_synthetic: synthetic.len() - fake.len(),
        authentic_length_mean: a_mean,
        authentic_length_std: a_std,
        synthetic_length_mean: s_mean,
        synthetic_length_std: s_std,
        occurrence_distance: occ,
        authentic_spe: a_spe.value,
        synthetic_spe: s_spe.map(|s| s.value),
        spe_skipped_pairs: a_spe.skipped_pairs + s_spe.map_or(0, |s| s.skipped_pairs),
        scorer_f1,
        fpr,
        scorer_diagnostic,
    })
}
