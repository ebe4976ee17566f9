//! First-order update rules.
//!
//! | kind     | update (g = gradient, t = step after increment)                        |
//! |----------|-------------------------------------------------------------------------|
//! | sgd      | θ ← θ − α·g                                                             |
//! | rmsprop  | v ← ρv + (1−ρ)g²; θ ← θ − α·g/(√v + ε)                                  |
//! | adam     | m ← β₁m + (1−β₁)g; v ← β₂v + (1−β₂)g²; θ ← θ − α·m̂/(√v̂ + ε)           |
//! | adagrad  | G ← G + g²; θ ← θ − α·g/(√G + ε)                                        |
//! | adadelta | E[g²] ← ρE[g²] + (1−ρ)g²; Δ = −√(E[Δ²]+ε)/√(E[g²]+ε)·g; E[Δ²] ← ρE[Δ²] + (1−ρ)Δ²; θ ← θ + α·Δ |
//! | adamax   | m ← β₁m + (1−β₁)g; u ← max(β₂u, \|g\|); θ ← θ − α/(1−β₁ᵗ)·m/(u + ε)    |
//! | nadam    | adam moments; θ ← θ − α·(β₁m/(1−β₁ᵗ⁺¹) + (1−β₁)g/(1−β₁ᵗ))/(√v̂ + ε)     |
//!
//! with m̂ = m/(1−β₁ᵗ), v̂ = v/(1−β₂ᵗ). Adadelta with α = 1 is Zeiler's
//! original rule; α acts as a plain multiplier otherwise.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::NetError;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const RMSPROP_RHO: f64 = 0.9;
pub const RMSPROP_EPS: f64 = 1e-8;
pub const ADADELTA_RHO: f64 = 0.95;
pub const ADADELTA_EPS: f64 = 1e-6;
pub const ADAGRAD_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Rmsprop,
    Adam,
    Sgd,
    Adagrad,
    Adadelta,
    Adamax,
    Nadam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 7] = [
        OptimizerKind::Rmsprop,
        OptimizerKind::Adam,
        OptimizerKind::Sgd,
        OptimizerKind::Adagrad,
        OptimizerKind::Adadelta,
        OptimizerKind::Adamax,
        OptimizerKind::Nadam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Rmsprop => "rmsprop",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adadelta => "adadelta",
            OptimizerKind::Adamax => "adamax",
            OptimizerKind::Nadam => "nadam",
        }
    }

    pub fn code(self) -> u8 {
        Self::ALL.iter().position(|&k| k == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    fn accumulators(self) -> usize {
        match self {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Rmsprop | OptimizerKind::Adagrad => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| NetError::UnknownName(s.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub step: u64,
    /// `slots[j][i]` is accumulator `j` for parameter tensor `i`.
    slots: Vec<Vec<Tensor>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64, params: &[Tensor]) -> Self {
        let slots = (0..kind.accumulators())
            .map(|_| params.iter().map(|p| Tensor::zeros(p.shape())).collect())
            .collect();
        Self {
            kind,
            learning_rate,
            step: 0,
            slots,
        }
    }

    /// Applies one update in place.
    pub fn apply(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<(), NetError> {
        if params.len() != grads.len()
            || self.slots.iter().any(|s| s.len() != params.len())
            || params.iter().zip(grads).any(|(p, g)| p.shape() != g.shape())
        {
            return Err(NetError::ShapeMismatch {
                expected: vec![params.len()],
                actual: vec![grads.len()],
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let lr = self.learning_rate;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let p = p.data_mut();
            let g = g.data();
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, &gi) in p.iter_mut().zip(g) {
                        *w -= lr * gi;
                    }
                }
                OptimizerKind::Rmsprop => {
                    let v = self.slots[0][i].data_mut();
                    for ((w, &gi), v) in p.iter_mut().zip(g).zip(v) {
                        *v = RMSPROP_RHO * *v + (1.0 - RMSPROP_RHO) * gi * gi;
                        *w -= lr * gi / (v.sqrt() + RMSPROP_EPS);
                    }
                }
                OptimizerKind::Adagrad => {
                    let acc = self.slots[0][i].data_mut();
                    for ((w, &gi), a) in p.iter_mut().zip(g).zip(acc) {
                        *a += gi * gi;
                        *w -= lr * gi / (a.sqrt() + ADAGRAD_EPS);
                    }
                }
                OptimizerKind::Adadelta => {
                    let (eg, ed) = two_slots(&mut self.slots, i);
                    for (((w, &gi), eg), ed) in p.iter_mut().zip(g).zip(eg).zip(ed) {
                        *eg = ADADELTA_RHO * *eg + (1.0 - ADADELTA_RHO) * gi * gi;
                        let delta = -((*ed + ADADELTA_EPS).sqrt() / (*eg + ADADELTA_EPS).sqrt()) * gi;
                        *ed = ADADELTA_RHO * *ed + (1.0 - ADADELTA_RHO) * delta * delta;
                        *w += lr * delta;
                    }
                }
                OptimizerKind::Adam | OptimizerKind::Nadam => {
                    let bc1 = 1.0 - BETA1.powi(t);
                    let bc1_next = 1.0 - BETA1.powi(t + 1);
                    let bc2 = 1.0 - BETA2.powi(t);
                    let nesterov = self.kind == OptimizerKind::Nadam;
                    let (m, v) = two_slots(&mut self.slots, i);
                    for (((w, &gi), m), v) in p.iter_mut().zip(g).zip(m).zip(v) {
                        *m = BETA1 * *m + (1.0 - BETA1) * gi;
                        *v = BETA2 * *v + (1.0 - BETA2) * gi * gi;
                        let m_hat = if nesterov {
                            BETA1 * *m / bc1_next + (1.0 - BETA1) * gi / bc1
                        } else {
                            *m / bc1
                        };
                        *w -= lr * m_hat / ((*v / bc2).sqrt() + ADAM_EPS);
                    }
                }
                OptimizerKind::Adamax => {
                    let step = lr / (1.0 - BETA1.powi(t));
                    let (m, u) = two_slots(&mut self.slots, i);
                    for (((w, &gi), m), u) in p.iter_mut().zip(g).zip(m).zip(u) {
                        *m = BETA1 * *m + (1.0 - BETA1) * gi;
                        *u = (BETA2 * *u).max(gi.abs());
                        *w -= step * *m / (*u + ADAM_EPS);
                    }
                }
            }
        }
        Ok(())
    }
}

fn two_slots(slots: &mut [Vec<Tensor>], i: usize) -> (&mut [f64], &mut [f64]) {
    let (a, b) = slots.split_at_mut(1);
    (a[0][i].data_mut(), b[0][i].data_mut())
}
