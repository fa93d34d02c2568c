use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{NumericsError, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates per parameter plus the step counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first: BTreeMap<String, Tensor>,
    pub second: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    /// One bias-corrected adaptive-moment update of every parameter in
    /// `params`. Parameters absent from `grads` are treated as having zero
    /// gradient.
    pub fn step(
        &mut self,
        params: &mut ParamStore,
        grads: &BTreeMap<String, Tensor>,
        hyper: &AdamConfig,
    ) -> Result<(), NumericsError> {
        if !(hyper.lr > 0.0) {
            return Err(NumericsError::InvalidLearningRate(hyper.lr));
        }
        for (name, g) in grads {
            match params.get(name) {
                Some(p) if p.shape() == g.shape() => {}
                Some(p) => {
                    return Err(NumericsError::ShapeMismatch {
                        op: "adam",
                        lhs: p.shape(),
                        rhs: g.shape(),
                    })
                }
                None => return Err(NumericsError::MissingEntry(name.clone())),
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - hyper.beta1.powi(t);
        let bc2 = 1.0 - hyper.beta2.powi(t);
        for (name, p) in params.iter_mut() {
            let [r, c] = p.shape();
            let m = self
                .first
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(r, c));
            let v = self
                .second
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(r, c));
            let g = grads.get(name);
            for i in 0..p.len() {
                let gi = g.map_or(0.0, |g| g.data()[i]);
                let mi = hyper.beta1 * m.data()[i] + (1.0 - hyper.beta1) * gi;
                let vi = hyper.beta2 * v.data()[i] + (1.0 - hyper.beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let update = hyper.lr * (mi / bc1) / ((vi / bc2).sqrt() + hyper.eps);
                p.data_mut()[i] -= update;
            }
        }
        Ok(())
    }
}
