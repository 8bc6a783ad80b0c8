use std::collections::HashMap;

use super::param::ParamSet;
use crate::error::{Error, Result};

/// SGD with classical momentum:
///
/// ```text
/// v <- momentum * v + grad
/// w <- w - lr * v
/// ```
///
/// With `momentum = 0` this is exactly vanilla gradient descent.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: HashMap<String, Vec<f64>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Sgd {
            lr,
            momentum,
            velocity: HashMap::new(),
        }
    }

    /// Applies one update from the accumulated gradients. Gradients are left
    /// untouched; call [`ParamSet::zero_grad`] before the next accumulation.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        for p in params.iter() {
            if let Some((index, &value)) = p.grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    name: p.name.clone(),
                    index,
                    value,
                });
            }
        }
        for p in params.iter_mut() {
            let v = self
                .velocity
                .entry(p.name.clone())
                .or_insert_with(|| vec![0.0; p.value.len()]);
            for ((w, g), vi) in p.value.iter_mut().zip(&p.grad).zip(v.iter_mut()) {
                *vi = self.momentum * *vi + g;
                *w -= self.lr * *vi;
            }
        }
        Ok(())
    }
}

/// Step decay: the base rate is divided by `factor` once for every decay
/// epoch already passed.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub decay_epochs: Vec<usize>,
    pub factor: f64,
}

impl LrSchedule {
    pub fn new(base_lr: f64, decay_epochs: Vec<usize>) -> Self {
        LrSchedule {
            base_lr,
            decay_epochs,
            factor: 10.0,
        }
    }

    /// Learning rate for zero-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self.decay_epochs.iter().filter(|&&e| epoch >= e).count();
        self.base_lr / self.factor.powi(passed as i32)
    }
}
