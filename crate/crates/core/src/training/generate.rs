use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, ModelConfig};
use super::TrainError;
use crate::autodiff::{softmax_slice, Graph, Tensor};
use crate::event_log::{decode, first_end, sample_random_sequence, truncate_at_end, Trace};
use crate::nn::{ar_logits, generator_forward, recurrent_step, Dropout, RecurrentState, SampleMode};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GenerateOptions {
    /// Autoregressive models pick the most likely next token instead of sampling.
    pub greedy: bool,
    /// Draw the initial token from the empirical first-token distribution
    /// instead of always using the most frequent one.
    pub sample_first_token: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSamples {
    pub traces: Vec<Trace>,
    /// Traces that ended before their first activity.
    pub empty: usize,
}

fn pick<R: Rng + ?Sized>(probs: &[f64], greedy: bool, rng: &mut R) -> usize {
    if greedy {
        return Tensor::row(probs.to_vec()).argmax_rows()[0];
    }
    match WeightedIndex::new(probs) {
        Ok(dist) => dist.sample(rng),
        Err(_) => 0,
    }
}

fn first_token<R: Rng + ?Sized>(ck: &Checkpoint, opts: GenerateOptions, rng: &mut R) -> Option<usize> {
    let counts = &ck.first_token_counts;
    if counts.iter().all(|&c| c == 0) {
        return None;
    }
    if opts.sample_first_token {
        let weights: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        return Some(pick(&weights, false, rng));
    }
    let max = *counts.iter().max().expect("non-empty");
    counts.iter().position(|&c| c == max)
}

fn autoregressive_ids<R: Rng + ?Sized>(ck: &Checkpoint, opts: GenerateOptions, rng: &mut R) -> Result<Vec<usize>, TrainError> {
    let end = ck.vocabulary.end_token_id();
    let l = ck.max_len;
    let Some(start) = first_token(ck, opts, rng) else {
        return Ok(vec![end; l]);
    };
    let mut ids = vec![start];
    let mut g = Graph::new();
    let p = ck.params.bind_frozen(&mut g);
    match &ck.config {
        ModelConfig::Recurrent(rc) => {
            let mut state = RecurrentState::zeros(&mut g, rc);
            while ids.len() < l && *ids.last().expect("non-empty") != end {
                let (logits, next) = recurrent_step(&mut g, &p, rc, *ids.last().expect("non-empty"), state)?;
                state = next;
                let probs = softmax_slice(g.value(logits).data());
                ids.push(pick(&probs, opts.greedy, rng));
            }
        }
        ModelConfig::Transformer(tc) => {
            while ids.len() < l && *ids.last().expect("non-empty") != end {
                let mut input = ids.clone();
                input.resize(l, end);
                let logits = ar_logits(&mut g, &p, tc, &input, &mut Dropout::disabled())?;
                let probs = softmax_slice(g.value(logits).row_slice(ids.len() - 1));
                ids.push(pick(&probs, opts.greedy, rng));
            }
        }
    }
    ids.resize(l, end);
    Ok(truncate_at_end(&ids, end))
}

fn parallel_ids<R: Rng + ?Sized>(ck: &Checkpoint, rng: &mut R) -> Result<Vec<usize>, TrainError> {
    let ModelConfig::Transformer(tc) = &ck.config else {
        return Err(TrainError::InvalidConfig(format!("{} needs a Transformer config", ck.kind)));
    };
    let mut g = Graph::new();
    let p = ck.params.bind_frozen(&mut g);
    let z = sample_random_sequence(tc.vocab_size_with_end, tc.max_len, rng);
    let out = generator_forward(&mut g, &p, tc, &z, SampleMode::Argmax, &mut Dropout::disabled())?;
    Ok(truncate_at_end(&g.value(out.s).argmax_rows(), tc.vocab_size_with_end - 1))
}

/// Draw `n` synthetic traces. Autoregressive models extend an initial token
/// until the end token or `max_len`; the others map fresh random sequences
/// through the generator. Everything is determined by `seed`.
pub fn generate_samples(
    ck: &Checkpoint,
    n: usize,
    seed: u64,
    opts: GenerateOptions,
) -> Result<GeneratedSamples, TrainError> {
    if n == 0 {
        return Err(TrainError::InvalidConfig("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n.to_string().len();
    let mut traces = Vec::with_capacity(n);
    let mut empty = 0;
    for i in 0..n {
        let ids = if ck.kind.is_autoregressive() {
            autoregressive_ids(ck, opts, &mut rng)?
        } else {
            parallel_ids(ck, &mut rng)?
        };
        let activities = decode(&ids, &ck.vocabulary);
        debug_assert_eq!(activities.len(), first_end(&ids, ck.vocabulary.end_token_id()));
        empty += usize::from(activities.is_empty());
        traces.push(Trace::new(format!("synthetic_{:0width$}", i + 1), activities));
    }
    Ok(GeneratedSamples { traces, empty })
}

/// Id sequence a trained generator produces from a given random input (used
/// for replay and determinism checks).
pub fn generator_output_ids(ck: &Checkpoint, z: &[usize]) -> Result<Vec<usize>, TrainError> {
    let ModelConfig::Transformer(tc) = &ck.config else {
        return Err(TrainError::InvalidConfig(format!("{} needs a Transformer config", ck.kind)));
    };
    let mut g = Graph::new();
    let p = ck.params.bind_frozen(&mut g);
    let out = generator_forward(&mut g, &p, tc, z, SampleMode::Argmax, &mut Dropout::disabled())?;
    Ok(g.value(out.s).argmax_rows())
}
