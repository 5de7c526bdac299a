use indexmap::IndexMap;

use super::config::{OptimizerKind, TrainConfig};
use crate::error::{Error, Result};
use crate::model::ParamStore;

/// Momentum SGD: `v ← momentum·v − lr·g; w ← w + v`.
pub fn sgd_step(w: &mut [f64], g: &[f64], lr: f64, momentum: f64, velocity: &mut [f64]) {
    for ((w, &g), v) in w.iter_mut().zip(g).zip(velocity.iter_mut()) {
        *v = momentum * *v - lr * g;
        *w += *v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u32,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// Bias-corrected Adam update.
pub fn adam_step(w: &mut [f64], g: &[f64], state: &mut AdamState, h: &AdamHyper) {
    state.t += 1;
    let c1 = 1.0 - h.beta1.powi(state.t as i32);
    let c2 = 1.0 - h.beta2.powi(state.t as i32);
    for i in 0..w.len() {
        state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g[i];
        state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * g[i] * g[i];
        let mhat = state.m[i] / c1;
        let vhat = state.v[i] / c2;
        w[i] -= h.lr * mhat / (vhat.sqrt() + h.eps);
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Slot {
    Sgd(Vec<f64>),
    Adam(AdamState),
}

/// Per-parameter optimizer state keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    momentum: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    slots: IndexMap<String, Slot>,
}

impl Optimizer {
    pub fn new(config: &TrainConfig) -> Self {
        Optimizer {
            kind: config.optimizer,
            momentum: config.momentum,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.adam_eps,
            slots: IndexMap::new(),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Applies one update to every named gradient.
    pub fn step(
        &mut self,
        params: &mut ParamStore,
        grads: &[(String, Vec<f64>)],
        lr: f64,
    ) -> Result<()> {
        for (name, g) in grads {
            let mut w = params.values(name)?;
            if w.len() != g.len() {
                return Err(Error::dim(format!(
                    "{name}: {} weights but {} gradients",
                    w.len(),
                    g.len()
                )));
            }
            let slot = self
                .slots
                .entry(name.clone())
                .or_insert_with(|| match self.kind {
                    OptimizerKind::Sgd => Slot::Sgd(vec![0.0; g.len()]),
                    OptimizerKind::Adam => Slot::Adam(AdamState::new(g.len())),
                });
            match slot {
                Slot::Sgd(v) => sgd_step(&mut w, g, lr, self.momentum, v),
                Slot::Adam(s) => {
                    let h = AdamHyper {
                        lr,
                        beta1: self.beta1,
                        beta2: self.beta2,
                        eps: self.eps,
                    };
                    adam_step(&mut w, g, s, &h)
                }
            }
            params.set(name, &w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_examples() {
        let (mut w, mut v) = (vec![1.0], vec![0.0]);
        sgd_step(&mut w, &[0.5], 0.1, 0.0, &mut v);
        assert!((w[0] - 0.95).abs() < 1e-15);

        let (mut w, mut v) = (vec![2.0], vec![0.4]);
        sgd_step(&mut w, &[0.0], 0.1, 0.9, &mut v);
        assert!((v[0] - 0.36).abs() < 1e-15);
        assert!((w[0] - 2.36).abs() < 1e-15);
    }

    #[test]
    fn sgd_two_momentum_steps_match_recursion() {
        let (mut w, mut v) = (vec![1.0], vec![0.0]);
        let (lr, m) = (0.1, 0.9);
        sgd_step(&mut w, &[0.5], lr, m, &mut v);
        sgd_step(&mut w, &[0.25], lr, m, &mut v);
        let v1 = -lr * 0.5;
        let v2 = m * v1 - lr * 0.25;
        assert!((w[0] - (1.0 + v1 + v2)).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_and_recursion() {
        let h = AdamHyper {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        };
        let mut w = vec![0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut w, &[1.0], &mut s, &h);
        assert!((w[0] + 0.001).abs() < 1e-9);

        let grads = [0.3, -1.2, 0.7];
        let mut w = vec![0.5];
        let mut s = AdamState::new(1);
        let (mut m, mut v, mut want) = (0.0f64, 0.0f64, 0.5f64);
        for (t, &g) in grads.iter().enumerate() {
            adam_step(&mut w, &[g], &mut s, &h);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let vh = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            want -= 0.001 * mh / (vh.sqrt() + 1e-7);
            assert!((w[0] - want).abs() < 1e-12);
        }

        let mut w = vec![0.25];
        let mut s = AdamState::new(1);
        for _ in 0..5 {
            adam_step(&mut w, &[0.0], &mut s, &h);
        }
        assert_eq!(w[0], 0.25);
    }
}
