//! Deterministic inputs shared by the kernel benchmarks.

use procgan::autodiff::Tensor;
use procgan::event_log::{EncodedDataset, Vocabulary};
use procgan::toyproc::{simulate, ToyProcessSpec};
use procgan::Trace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// `n` random id sequences with lengths in `1..=max_len` over `alphabet` symbols.
pub fn random_sequences(n: usize, max_len: usize, alphabet: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(1..=max_len);
            (0..len).map(|_| rng.gen_range(0..alphabet)).collect()
        })
        .collect()
}

pub fn toy_traces(n: usize, seed: u64) -> Vec<Trace> {
    simulate(&ToyProcessSpec::toy6(seed), n).expect("toy process is valid").traces
}

pub fn toy_dataset(n: usize, seed: u64) -> EncodedDataset {
    let traces = toy_traces(n, seed);
    let vocab = Vocabulary::build(&traces);
    let max_len = traces.iter().map(Trace::len).max().unwrap_or(1);
    EncodedDataset::encode(&traces, &vocab, max_len).expect("traces fit their own vocabulary")
}
