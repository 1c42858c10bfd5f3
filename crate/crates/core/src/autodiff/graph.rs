//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Every operation appends a node to the [`Graph`]; node indices are a valid
//! topological order, so [`Graph::backward`] is a single reverse sweep.
//! Parameters enter as leaves ([`Graph::leaf`]), everything else that should
//! not receive gradients as constants ([`Graph::constant`]).

use super::tensor::{argmax, Tensor};
use super::AutodiffError;

/// Lower clamp applied to inputs of `log` and to probabilities in the
/// log-based losses.
pub const PROB_EPS: f64 = 1e-12;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Reduction / normalization axis, numbered as in the usual array libraries:
/// `Rows` (axis 0) runs down a column, `Cols` (axis 1) runs along a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat { inputs: Vec<Var>, axis: Axis },
    SliceCols { input: Var, start: usize },
    Softmax { input: Var, axis: Axis },
    Log(Var),
    Exp(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    LayerNorm { input: Var, inv_std: Vec<f64> },
    Embedding { table: Var, ids: Vec<usize> },
    Mean(Var),
    Sum(Var),
    CrossEntropy { probs: Var, targets: Vec<usize> },
    BinaryCrossEntropy { probs: Var, targets: Vec<f64> },
    GumbelSoftmaxSt { logits: Var, soft: Tensor, tau: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

/// How the second operand of an elementwise binary op maps onto the first.
#[derive(Debug, Clone, Copy)]
enum Broadcast {
    Same,
    Row,
    Scalar,
}

impl Broadcast {
    fn index(self, i: usize, cols: usize) -> usize {
        match self {
            Broadcast::Same => i,
            Broadcast::Row => i % cols,
            Broadcast::Scalar => 0,
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A differentiable input (a model parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Copy of `v` with no path back to its inputs.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Gradient of the last [`Graph::backward`] loss w.r.t. `v`, if `v` was
    /// reached by the backward sweep.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let [r, c] = self.shape(v);
        self.grads
            .get(v.0)
            .and_then(|g| g.as_ref())
            .map(|g| Tensor::new(r, c, g.clone()))
    }

    fn broadcast(&self, op: &'static str, a: Var, b: Var) -> Result<Broadcast, AutodiffError> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa == sb {
            Ok(Broadcast::Same)
        } else if sb == [1, sa[1]] {
            Ok(Broadcast::Row)
        } else if sb == [1, 1] {
            Ok(Broadcast::Scalar)
        } else {
            Err(AutodiffError::ShapeMismatch {
                op,
                left: sa,
                right: sb,
            })
        }
    }

    fn elementwise(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, AutodiffError> {
        let bc = self.broadcast(name, a, b)?;
        let va = self.value(a);
        let vb = self.value(b);
        let cols = va.cols();
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, vb.data()[bc.index(i, cols)]))
            .collect();
        let value = Tensor::new(va.rows(), cols, data);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, op, rg))
    }

    /// Elementwise sum; `b` may be the same shape, a `1 x cols` row or a scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|x| x * factor).collect();
        let value = Tensor::new(va.rows(), va.cols(), data);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, factor), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let va = self.value(a);
        let vb = self.value(b);
        if va.cols() != vb.rows() {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                left: va.shape(),
                right: vb.shape(),
            });
        }
        let value = matmul_raw(va, vb);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(value, Op::Transpose(a), rg)
    }

    /// Concatenate along `axis`: `Cols` joins side by side (rows must agree),
    /// `Rows` stacks vertically (columns must agree).
    pub fn concat(&mut self, inputs: &[Var], axis: Axis) -> Result<Var, AutodiffError> {
        let first = *inputs.first().ok_or(AutodiffError::InvalidArgument {
            op: "concat",
            reason: "no inputs".into(),
        })?;
        let s0 = self.shape(first);
        for &v in &inputs[1..] {
            let s = self.shape(v);
            let ok = match axis {
                Axis::Cols => s[0] == s0[0],
                Axis::Rows => s[1] == s0[1],
            };
            if !ok {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat",
                    left: s0,
                    right: s,
                });
            }
        }
        let value = match axis {
            Axis::Cols => {
                let rows = s0[0];
                let total: usize = inputs.iter().map(|&v| self.shape(v)[1]).sum();
                let mut data = Vec::with_capacity(rows * total);
                for r in 0..rows {
                    for &v in inputs {
                        data.extend_from_slice(self.value(v).row_slice(r));
                    }
                }
                Tensor::new(rows, total, data)
            }
            Axis::Rows => {
                let total: usize = inputs.iter().map(|&v| self.shape(v)[0]).sum();
                let mut data = Vec::with_capacity(total * s0[1]);
                for &v in inputs {
                    data.extend_from_slice(self.value(v).data());
                }
                Tensor::new(total, s0[1], data)
            }
        };
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AutodiffError> {
        let va = self.value(a);
        if start >= end || end > va.cols() {
            return Err(AutodiffError::InvalidArgument {
                op: "slice_cols",
                reason: format!("range {start}..{end} for {} columns", va.cols()),
            });
        }
        let width = end - start;
        let value = Tensor::from_fn(va.rows(), width, |r, c| va.get(r, start + c));
        let rg = self.rg(a);
        Ok(self.push(value, Op::SliceCols { input: a, start }, rg))
    }

    pub fn softmax(&mut self, a: Var, axis: Axis) -> Var {
        let value = softmax_raw(self.value(a), axis);
        let rg = self.rg(a);
        self.push(value, Op::Softmax { input: a, axis }, rg)
    }

    /// Natural log with the input clamped below at [`PROB_EPS`]; the gradient
    /// is zero where the clamp is active.
    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(PROB_EPS).ln(), Op::Log(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let va = self.value(a);
        let data = va.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(va.rows(), va.cols(), data);
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    /// Row-wise standardization `(x - mean) / sqrt(var + eps)`, without the
    /// affine part (callers multiply/add gain and bias separately).
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let va = self.value(a);
        let (rows, cols) = (va.rows(), va.cols());
        let mut data = Vec::with_capacity(rows * cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = va.row_slice(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            data.extend(row.iter().map(|x| (x - mean) * is));
        }
        let value = Tensor::new(rows, cols, data);
        let rg = self.rg(a);
        self.push(value, Op::LayerNorm { input: a, inv_std }, rg)
    }

    /// Rows of `table` selected by `ids`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, AutodiffError> {
        let vt = self.value(table);
        if let Some(&bad) = ids.iter().find(|&&id| id >= vt.rows()) {
            return Err(AutodiffError::InvalidArgument {
                op: "embedding",
                reason: format!("id {bad} out of range for table with {} rows", vt.rows()),
            });
        }
        let cols = vt.cols();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            data.extend_from_slice(vt.row_slice(id));
        }
        let value = Tensor::new(ids.len(), cols, data);
        let rg = self.rg(table);
        Ok(self.push(
            value,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Mean of all entries, as a scalar.
    pub fn mean(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let value = Tensor::scalar(va.data().iter().sum::<f64>() / va.len() as f64);
        let rg = self.rg(a);
        self.push(value, Op::Mean(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    /// Mean negative log-probability of `targets`, one per row of `probs`.
    pub fn cross_entropy(&mut self, probs: Var, targets: &[usize]) -> Result<Var, AutodiffError> {
        let vp = self.value(probs);
        if vp.rows() != targets.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "cross_entropy",
                left: vp.shape(),
                right: [targets.len(), 1],
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= vp.cols()) {
            return Err(AutodiffError::InvalidArgument {
                op: "cross_entropy",
                reason: format!("target {bad} out of range for {} classes", vp.cols()),
            });
        }
        let n = targets.len() as f64;
        let loss = targets
            .iter()
            .enumerate()
            .map(|(r, &t)| -vp.get(r, t).max(PROB_EPS).ln())
            .sum::<f64>()
            / n;
        let rg = self.rg(probs);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                probs,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Mean binary cross-entropy of elementwise probabilities against 0/1
    /// targets, with probabilities clamped to `[PROB_EPS, 1 - PROB_EPS]`.
    pub fn binary_cross_entropy(&mut self, probs: Var, targets: &[f64]) -> Result<Var, AutodiffError> {
        let vp = self.value(probs);
        if vp.len() != targets.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "binary_cross_entropy",
                left: vp.shape(),
                right: [targets.len(), 1],
            });
        }
        let n = targets.len() as f64;
        let loss = vp
            .data()
            .iter()
            .zip(targets)
            .map(|(&p, &y)| {
                let p = clamp_prob(p);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / n;
        let rg = self.rg(probs);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::BinaryCrossEntropy {
                probs,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Straight-through Gumbel-Softmax. The forward value is the one-hot of
    /// `argmax(logits + noise)` per row; the backward pass uses the gradient of
    /// `softmax((logits + noise) / tau)`.
    pub fn gumbel_softmax_st(&mut self, logits: Var, noise: &Tensor, tau: f64) -> Result<Var, AutodiffError> {
        self.straight_through(logits, noise, tau, true)
    }

    /// Straight-through estimator whose forward value is the one-hot of
    /// `argmax(logits)` (noise-free), with the same Gumbel-Softmax backward
    /// as [`Graph::gumbel_softmax_st`].
    pub fn argmax_st(&mut self, logits: Var, noise: &Tensor, tau: f64) -> Result<Var, AutodiffError> {
        self.straight_through(logits, noise, tau, false)
    }

    fn straight_through(&mut self, logits: Var, noise: &Tensor, tau: f64, noisy_forward: bool) -> Result<Var, AutodiffError> {
        let vl = self.value(logits);
        if vl.shape() != noise.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "gumbel_softmax_st",
                left: vl.shape(),
                right: noise.shape(),
            });
        }
        if !(tau > 0.0) {
            return Err(AutodiffError::InvalidArgument {
                op: "gumbel_softmax_st",
                reason: format!("temperature must be positive, got {tau}"),
            });
        }
        let perturbed = Tensor::new(
            vl.rows(),
            vl.cols(),
            vl.data()
                .iter()
                .zip(noise.data())
                .map(|(l, g)| (l + g) / tau)
                .collect(),
        );
        let soft = softmax_raw(&perturbed, Axis::Cols);
        let winners = if noisy_forward { perturbed.argmax_rows() } else { vl.argmax_rows() };
        let hard = Tensor::one_hot(&winners, vl.cols());
        let rg = self.rg(logits);
        Ok(self.push(hard, Op::GumbelSoftmaxSt { logits, soft, tau }, rg))
    }

    /// Reverse sweep from a scalar `loss`, populating gradients of every
    /// node that requires one.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutodiffError> {
        let shape = self.shape(loss);
        if shape != [1, 1] {
            return Err(AutodiffError::NonScalarLoss(shape));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.backprop_node(i, &dy, &mut grads);
            grads[i] = Some(dy);
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, i: usize, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let va = self.value(*a);
                let vb = self.value(*b);
                let dyt = Tensor::new(y.rows(), y.cols(), dy.to_vec());
                if self.rg(*a) {
                    let da = matmul_raw(&dyt, &vb.transpose());
                    accumulate(grads, *a, da.data());
                }
                if self.rg(*b) {
                    let db = matmul_raw(&va.transpose(), &dyt);
                    accumulate(grads, *b, db.data());
                }
            }
            Op::Transpose(a) => {
                let dyt = Tensor::new(y.rows(), y.cols(), dy.to_vec()).transpose();
                accumulate(grads, *a, dyt.data());
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.rg(*a) {
                    accumulate(grads, *a, dy);
                }
                if self.rg(*b) {
                    let reduced = self.reduce_broadcast(*a, *b, dy.iter().map(|g| sign * g));
                    accumulate(grads, *b, &reduced);
                }
            }
            Op::Mul(a, b) => {
                let va = self.value(*a);
                let vb = self.value(*b);
                let bc = self.broadcast("mul", *a, *b).expect("shape checked at forward");
                let cols = va.cols();
                if self.rg(*a) {
                    let da: Vec<f64> = dy
                        .iter()
                        .enumerate()
                        .map(|(k, g)| g * vb.data()[bc.index(k, cols)])
                        .collect();
                    accumulate(grads, *a, &da);
                }
                if self.rg(*b) {
                    let prod = dy.iter().zip(va.data()).map(|(g, x)| g * x);
                    let reduced = self.reduce_broadcast(*a, *b, prod);
                    accumulate(grads, *b, &reduced);
                }
            }
            Op::Scale(a, f) => {
                let da: Vec<f64> = dy.iter().map(|g| g * f).collect();
                accumulate(grads, *a, &da);
            }
            Op::Concat { inputs, axis } => match axis {
                Axis::Cols => {
                    let total = y.cols();
                    let mut offset = 0;
                    for &v in inputs {
                        let w = self.shape(v)[1];
                        if self.rg(v) {
                            let mut dv = Vec::with_capacity(y.rows() * w);
                            for r in 0..y.rows() {
                                dv.extend_from_slice(&dy[r * total + offset..r * total + offset + w]);
                            }
                            accumulate(grads, v, &dv);
                        }
                        offset += w;
                    }
                }
                Axis::Rows => {
                    let mut offset = 0;
                    for &v in inputs {
                        let n = self.value(v).len();
                        if self.rg(v) {
                            accumulate(grads, v, &dy[offset..offset + n]);
                        }
                        offset += n;
                    }
                }
            },
            Op::SliceCols { input, start } => {
                let src_cols = self.shape(*input)[1];
                let w = y.cols();
                let mut da = vec![0.0; y.rows() * src_cols];
                for r in 0..y.rows() {
                    da[r * src_cols + start..r * src_cols + start + w]
                        .copy_from_slice(&dy[r * w..(r + 1) * w]);
                }
                accumulate(grads, *input, &da);
            }
            Op::Softmax { input, axis } => {
                let da = softmax_backward(y, dy, *axis);
                accumulate(grads, *input, &da);
            }
            Op::Log(a) => {
                let va = self.value(*a);
                let da: Vec<f64> = dy
                    .iter()
                    .zip(va.data())
                    .map(|(g, &x)| if x >= PROB_EPS { g / x } else { 0.0 })
                    .collect();
                accumulate(grads, *a, &da);
            }
            Op::Exp(a) => {
                let da: Vec<f64> = dy.iter().zip(y.data()).map(|(g, v)| g * v).collect();
                accumulate(grads, *a, &da);
            }
            Op::Tanh(a) => {
                let da: Vec<f64> = dy.iter().zip(y.data()).map(|(g, v)| g * (1.0 - v * v)).collect();
                accumulate(grads, *a, &da);
            }
            Op::Sigmoid(a) => {
                let da: Vec<f64> = dy.iter().zip(y.data()).map(|(g, v)| g * v * (1.0 - v)).collect();
                accumulate(grads, *a, &da);
            }
            Op::Relu(a) => {
                let va = self.value(*a);
                let da: Vec<f64> = dy
                    .iter()
                    .zip(va.data())
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect();
                accumulate(grads, *a, &da);
            }
            Op::LayerNorm { input, inv_std } => {
                let cols = y.cols();
                let n = cols as f64;
                let mut da = Vec::with_capacity(y.len());
                for (r, is) in inv_std.iter().enumerate() {
                    let yr = y.row_slice(r);
                    let gr = &dy[r * cols..(r + 1) * cols];
                    let mean_g = gr.iter().sum::<f64>() / n;
                    let mean_gy = gr.iter().zip(yr).map(|(g, v)| g * v).sum::<f64>() / n;
                    da.extend(gr.iter().zip(yr).map(|(g, v)| is * (g - mean_g - v * mean_gy)));
                }
                accumulate(grads, *input, &da);
            }
            Op::Embedding { table, ids } => {
                let [rows, cols] = self.shape(*table);
                let mut dt = vec![0.0; rows * cols];
                for (r, &id) in ids.iter().enumerate() {
                    for c in 0..cols {
                        dt[id * cols + c] += dy[r * cols + c];
                    }
                }
                accumulate(grads, *table, &dt);
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                accumulate(grads, *a, &vec![dy[0] / n as f64; n]);
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                accumulate(grads, *a, &vec![dy[0]; n]);
            }
            Op::CrossEntropy { probs, targets } => {
                let vp = self.value(*probs);
                let n = targets.len() as f64;
                let mut dp = vec![0.0; vp.len()];
                for (r, &t) in targets.iter().enumerate() {
                    let p = vp.get(r, t);
                    if p >= PROB_EPS {
                        dp[r * vp.cols() + t] = -dy[0] / (n * p);
                    }
                }
                accumulate(grads, *probs, &dp);
            }
            Op::BinaryCrossEntropy { probs, targets } => {
                let vp = self.value(*probs);
                let n = targets.len() as f64;
                let dp: Vec<f64> = vp
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&p, &t)| {
                        if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
                            0.0
                        } else {
                            -dy[0] / n * (t / p - (1.0 - t) / (1.0 - p))
                        }
                    })
                    .collect();
                accumulate(grads, *probs, &dp);
            }
            Op::GumbelSoftmaxSt { logits, soft, tau } => {
                let da: Vec<f64> = softmax_backward(soft, dy, Axis::Cols)
                    .into_iter()
                    .map(|g| g / tau)
                    .collect();
                accumulate(grads, *logits, &da);
            }
        }
    }

    fn reduce_broadcast(&self, a: Var, b: Var, full: impl Iterator<Item = f64>) -> Vec<f64> {
        let cols = self.shape(a)[1];
        let bc = self.broadcast("reduce", a, b).expect("shape checked at forward");
        let mut out = vec![0.0; self.value(b).len()];
        for (k, g) in full.enumerate() {
            out[bc.index(k, cols)] += g;
        }
        out
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, delta: &[f64]) {
    match &mut grads[v.0] {
        Some(g) => {
            for (x, d) in g.iter_mut().zip(delta) {
                *x += d;
            }
        }
        slot @ None => *slot = Some(delta.to_vec()),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

pub(crate) fn matmul_raw(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; n * m];
    let ad = a.data();
    let bd = b.data();
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let x = ad[i * k + p];
            if x == 0.0 {
                continue;
            }
            let brow = &bd[p * m..(p + 1) * m];
            for (o, y) in orow.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
    Tensor::new(n, m, out)
}

pub(crate) fn softmax_raw(x: &Tensor, axis: Axis) -> Tensor {
    match axis {
        Axis::Cols => {
            let mut data = Vec::with_capacity(x.len());
            for r in 0..x.rows() {
                data.extend(softmax_slice(x.row_slice(r)));
            }
            Tensor::new(x.rows(), x.cols(), data)
        }
        Axis::Rows => softmax_raw(&x.transpose(), Axis::Cols).transpose(),
    }
}

pub(crate) fn softmax_slice(row: &[f64]) -> Vec<f64> {
    let max = row[argmax(row)];
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn softmax_backward(y: &Tensor, dy: &[f64], axis: Axis) -> Vec<f64> {
    match axis {
        Axis::Cols => {
            let cols = y.cols();
            let mut dx = Vec::with_capacity(y.len());
            for r in 0..y.rows() {
                let yr = y.row_slice(r);
                let gr = &dy[r * cols..(r + 1) * cols];
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                dx.extend(yr.iter().zip(gr).map(|(v, g)| v * (g - dot)));
            }
            dx
        }
        Axis::Rows => {
            let yt = y.transpose();
            let dyt = Tensor::new(y.rows(), y.cols(), dy.to_vec()).transpose();
            let dxt = softmax_backward(&yt, dyt.data(), Axis::Cols);
            Tensor::new(y.cols(), y.rows(), dxt).transpose().into_data()
        }
    }
}
