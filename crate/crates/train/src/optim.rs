//! SGD with heavy-ball momentum and a warmup-then-step learning-rate schedule.

use crate::error::{Error, Result};

/// `v ← μ·v + (g + wd·w)`, `w ← w − lr·v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    momentum: f64,
    weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidSpec(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::InvalidSpec(format!("weight decay must be >= 0, got {weight_decay}")));
        }
        Ok(Self { momentum, weight_decay, velocity: Vec::new() })
    }

    /// Applies one update. `params` and `grads` must keep the same layout
    /// across calls.
    pub fn step(&mut self, params: &mut [&mut Vec<f64>], grads: &[Vec<f64>], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::DimensionMismatch {
                what: "gradient buffers",
                expected: params.len(),
                got: grads.len(),
            });
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            if p.len() != g.len() || p.len() != v.len() {
                return Err(Error::DimensionMismatch { what: "gradient length", expected: p.len(), got: g.len() });
            }
            for ((w, &g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                let g = if self.weight_decay == 0.0 { g } else { g + self.weight_decay * *w };
                *v = if self.momentum == 0.0 { g } else { self.momentum * *v + g };
                *w -= lr * *v;
            }
        }
        Ok(())
    }
}

/// Linear warmup over the first `warmup` epochs, then a factor per passed
/// drop epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub warmup: usize,
    pub drops: Vec<usize>,
    pub factor: f64,
}

impl LrSchedule {
    pub fn at(&self, epoch: usize) -> f64 {
        if epoch < self.warmup {
            return self.base * (epoch + 1) as f64 / self.warmup as f64;
        }
        let passed = self.drops.iter().filter(|&&d| d <= epoch).count();
        self.base * self.factor.powi(passed as i32)
    }
}
