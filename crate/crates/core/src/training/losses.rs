use serde::{Deserialize, Serialize};

use crate::autodiff::PROB_EPS;
use crate::event_log::first_end;

fn neg_log(p: f64) -> f64 {
    -p.clamp(PROB_EPS, 1.0 - PROB_EPS).ln()
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    values.sum::<f64>() / n as f64
}

/// `L_G = mean(-ln D(G(Z)))`.
pub fn generator_loss(d_scores: &[f64]) -> f64 {
    mean(d_scores.iter().map(|&s| neg_log(s)))
}

/// `L_D = mean(-ln d_real) + mean(-ln(1 - d_fake))`.
pub fn discriminator_loss(d_real: &[f64], d_fake: &[f64]) -> f64 {
    mean(d_real.iter().map(|&s| neg_log(s))) + mean(d_fake.iter().map(|&s| neg_log(1.0 - s)))
}

/// `KL(S || X) / m`. Zero entries of `S` contribute nothing (the `0 ln 0`
/// limit); entries of `X` are clamped to at least 1e-12.
pub fn kl_aux_loss(authentic: &[f64], synthetic: &[f64], m: usize) -> f64 {
    assert_eq!(authentic.len(), synthetic.len(), "distribution widths differ");
    let sum: f64 = authentic
        .iter()
        .zip(synthetic)
        .filter(|(_, &s)| s > 0.0)
        .map(|(&x, &s)| {
            let s = s.max(PROB_EPS);
            s * (s.ln() - x.max(PROB_EPS).ln())
        })
        .sum();
    sum / m.max(1) as f64
}

/// Squared distance between the two distributions divided by
/// `m x (number of entries)`.
pub fn mse_aux_loss(authentic: &[f64], synthetic: &[f64], m: usize) -> f64 {
    assert_eq!(authentic.len(), synthetic.len(), "distribution widths differ");
    let sum: f64 = authentic.iter().zip(synthetic).map(|(x, s)| (x - s).powi(2)).sum();
    sum / (m.max(1) * authentic.len().max(1)) as f64
}

/// Activity distribution of a batch of id sequences: counts of every non-end
/// id before each sequence's first end token, normalized over the batch.
/// Has `end_token_id` entries (the end token is excluded); all zeros when the
/// batch contains only empty sequences.
pub fn batch_activity_distribution<S: AsRef<[usize]>>(sequences: &[S], end_token_id: usize) -> Vec<f64> {
    let mut counts = vec![0.0; end_token_id];
    let mut total = 0.0;
    for seq in sequences {
        let seq = seq.as_ref();
        for &id in &seq[..first_end(seq, end_token_id)] {
            counts[id] += 1.0;
            total += 1.0;
        }
    }
    if total > 0.0 {
        for c in &mut counts {
            *c /= total;
        }
    }
    counts
}

/// Loss components of one logged epoch. Generator fields are present on
/// generator epochs and the discriminator loss on discriminator epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub l_g: Option<f64>,
    pub l_g_aux: Option<f64>,
    pub l_g_total: Option<f64>,
    pub l_d: Option<f64>,
    pub d_accuracy: f64,
}
