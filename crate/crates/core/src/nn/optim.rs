use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecayUnit {
    #[default]
    Iteration,
    Epoch,
}

/// Warm-up then geometric decay.
///
/// While `epoch < growth_epochs` the rate is `base · 2^⌈i / growth_period⌉`
/// with `i` the 1-based global iteration. Afterwards the rate reached at the
/// end of the growth phase is multiplied by `decay` per iteration (or per
/// epoch), never dropping below `floor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSchedule {
    pub growth_epochs: usize,
    pub growth_period: usize,
    pub decay: f64,
    pub floor: f64,
    pub decay_unit: DecayUnit,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            growth_epochs: 2,
            growth_period: 50,
            decay: 0.95,
            floor: 1e-8,
            decay_unit: DecayUnit::Iteration,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.growth_period == 0 {
            return Err(Error::config("growth_period must be positive"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::config("decay must lie in (0, 1]"));
        }
        if !(self.floor >= 0.0) {
            return Err(Error::config("floor must be non-negative"));
        }
        Ok(())
    }

    fn growth(&self, base_lr: f64, iteration: usize) -> f64 {
        base_lr * (iteration.div_ceil(self.growth_period) as f64).exp2()
    }

    /// Rate for 1-based `iteration` inside 0-based `epoch`, given the
    /// number of iterations per epoch.
    pub fn rate(
        &self,
        base_lr: f64,
        iteration: usize,
        epoch: usize,
        iters_per_epoch: usize,
    ) -> f64 {
        if epoch < self.growth_epochs {
            return self.growth(base_lr, iteration);
        }
        let growth_end = self.growth_epochs * iters_per_epoch;
        let peak = if growth_end == 0 {
            base_lr
        } else {
            self.growth(base_lr, growth_end)
        };
        let steps = match self.decay_unit {
            DecayUnit::Iteration => iteration.saturating_sub(growth_end),
            DecayUnit::Epoch => epoch + 1 - self.growth_epochs,
        };
        (peak * self.decay.powi(steps.min(i32::MAX as usize) as i32)).max(self.floor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Adam {
            config,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        let AdamConfig { beta1, beta2, eps } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}
