//! Minimal reverse-mode automatic differentiation over dense 2-D tensors,
//! with the Adam optimizer and straight-through Gumbel-Softmax sampling.

mod adam;
mod graph;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use graph::{Axis, Graph, Var, PROB_EPS};
pub use tensor::Tensor;

pub(crate) use graph::softmax_slice;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: [usize; 2],
        right: [usize; 2],
    },
    #[error("invalid argument to {op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("backward() needs a scalar loss, got shape {0:?}")]
    NonScalarLoss([usize; 2]),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("gradient for `{name}` has {got} entries, parameter has {expected}")]
    GradientLength {
        name: String,
        expected: usize,
        got: usize,
    },
}

/// Standard Gumbel noise `-ln(-ln u)` with `u` drawn from the open interval (0, 1).
pub fn sample_gumbel<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| {
        let u: f64 = loop {
            let u: f64 = rng.gen();
            if u > 0.0 && u < 1.0 {
                break u;
            }
        };
        -(-u.ln()).ln()
    })
}
