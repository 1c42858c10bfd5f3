use rand::Rng;
use serde::{Deserialize, Serialize};

use super::transformer::linear;
use super::{Bound, ModelError, ModelParams};
use crate::autodiff::{Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Gru,
    Lstm,
}

impl CellKind {
    fn gates(self) -> &'static [&'static str] {
        match self {
            CellKind::Gru => &["z", "r", "h"],
            CellKind::Lstm => &["i", "f", "o", "g"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecurrentConfig {
    pub cell: CellKind,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub vocab_size_with_end: usize,
}

impl RecurrentConfig {
    pub fn new(cell: CellKind, vocab_width: usize) -> Self {
        Self {
            cell,
            hidden_dim: 64,
            embed_dim: 16,
            vocab_size_with_end: vocab_width,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden_dim == 0 || self.embed_dim == 0 || self.vocab_size_with_end < 2 {
            return Err(ModelError::InvalidConfig(
                "recurrent dimensions must be positive and the vocabulary must hold an activity and the end token".into(),
            ));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (e, h, v) = (self.embed_dim, self.hidden_dim, self.vocab_size_with_end);
        v * e + self.cell.gates().len() * (e * h + h * h + h) + h * v + v
    }
}

pub fn init_recurrent<R: Rng + ?Sized>(cfg: &RecurrentConfig, rng: &mut R) -> ModelParams {
    let (e, h, v) = (cfg.embed_dim, cfg.hidden_dim, cfg.vocab_size_with_end);
    let mut p = ModelParams::new();
    p.init_normal("embed", v, e, 1.0, rng);
    for gate in cfg.cell.gates() {
        p.init_xavier(&format!("w_{gate}"), e, h, rng);
        p.init_xavier(&format!("u_{gate}"), h, h, rng);
        // A forget-gate bias of 1 keeps early gradients alive.
        let bias = if *gate == "f" { 1.0 } else { 0.0 };
        p.init_const(&format!("b_{gate}"), 1, h, bias);
    }
    p.init_xavier("out.w", h, v, rng);
    p.init_const("out.b", 1, v, 0.0);
    p
}

/// Hidden (and, for LSTM, cell) state of one sequence.
#[derive(Debug, Clone, Copy)]
pub struct RecurrentState {
    pub h: Var,
    pub c: Option<Var>,
}

impl RecurrentState {
    pub fn zeros(g: &mut Graph, cfg: &RecurrentConfig) -> Self {
        let h = g.constant(Tensor::zeros(1, cfg.hidden_dim));
        let c = (cfg.cell == CellKind::Lstm).then(|| g.constant(Tensor::zeros(1, cfg.hidden_dim)));
        Self { h, c }
    }
}

fn gate_pre(g: &mut Graph, p: &Bound, x: Var, h: Var, gate: &str) -> Result<Var, ModelError> {
    let xw = linear(g, p, x, &format!("w_{gate}"), &format!("b_{gate}"))?;
    let hu = g.matmul(h, p.get(&format!("u_{gate}"))?)?;
    Ok(g.add(xw, hu)?)
}

/// Feed one token; returns next-token logits (`1 x V`) and the new state.
pub fn recurrent_step(
    g: &mut Graph,
    p: &Bound,
    cfg: &RecurrentConfig,
    token: usize,
    state: RecurrentState,
) -> Result<(Var, RecurrentState), ModelError> {
    if token >= cfg.vocab_size_with_end {
        return Err(ModelError::InvalidConfig(format!(
            "token {token} outside vocabulary of width {}",
            cfg.vocab_size_with_end
        )));
    }
    let x = g.embedding(p.get("embed")?, &[token])?;
    let h = state.h;
    let next = match cfg.cell {
        CellKind::Gru => {
            let z = gate_pre(g, p, x, h, "z")?;
            let z = g.sigmoid(z);
            let r = gate_pre(g, p, x, h, "r")?;
            let r = g.sigmoid(r);
            let rh = g.mul(r, h)?;
            let cand = gate_pre(g, p, x, rh, "h")?;
            let cand = g.tanh(cand);
            // h' = h + z * (cand - h)
            let diff = g.sub(cand, h)?;
            let step = g.mul(z, diff)?;
            RecurrentState { h: g.add(h, step)?, c: None }
        }
        CellKind::Lstm => {
            let c = state
                .c
                .ok_or_else(|| ModelError::InvalidConfig("LSTM state without a cell vector".into()))?;
            let i = gate_pre(g, p, x, h, "i")?;
            let i = g.sigmoid(i);
            let f = gate_pre(g, p, x, h, "f")?;
            let f = g.sigmoid(f);
            let o = gate_pre(g, p, x, h, "o")?;
            let o = g.sigmoid(o);
            let cand = gate_pre(g, p, x, h, "g")?;
            let cand = g.tanh(cand);
            let keep = g.mul(f, c)?;
            let write = g.mul(i, cand)?;
            let c = g.add(keep, write)?;
            let tc = g.tanh(c);
            RecurrentState { h: g.mul(o, tc)?, c: Some(c) }
        }
    };
    let logits = linear(g, p, next.h, "out.w", "out.b")?;
    Ok((logits, next))
}
