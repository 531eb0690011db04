use ndarray::Zip;

use super::{GradientSet, NetworkParams};
use crate::{Error, Result};

/// Annealed learning rate `η_p = η_0 / (1 + α t)^β` for progress `t ∈ [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            beta: 0.75,
        }
    }
}

impl LrSchedule {
    pub fn rate(&self, eta0: f64, t: f64) -> f64 {
        eta0 / (1.0 + self.alpha * t).powf(self.beta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    /// Base rate for the feature extractor layers.
    pub eta0_extractor: f64,
    /// Base rate for the classifier layer.
    pub eta0_classifier: f64,
    pub schedule: LrSchedule,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            weight_decay: 0.0005,
            eta0_extractor: 0.001,
            eta0_classifier: 0.01,
            schedule: LrSchedule::default(),
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must be in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be >= 0"));
        }
        if !(self.eta0_extractor >= 0.0 && self.eta0_classifier >= 0.0) {
            return Err(Error::config("learning rates must be >= 0"));
        }
        if !(self.schedule.alpha >= 0.0 && self.schedule.beta >= 0.0) {
            return Err(Error::config("schedule alpha/beta must be >= 0"));
        }
        Ok(())
    }
}

/// SGD with momentum and L2 weight decay, plus the schedule progress `t`.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: SgdConfig,
    velocity: Option<GradientSet>,
    t: f64,
}

impl OptimizerState {
    pub fn new(config: SgdConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            velocity: None,
            t: 0.0,
        })
    }

    pub fn progress(&self) -> f64 {
        self.t
    }

    pub fn set_progress(&mut self, t: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::config(format!("schedule progress {t} outside [0, 1]")));
        }
        self.t = t;
        Ok(())
    }

    /// Sets `t = step / total`, clamped to 1.
    pub fn set_step(&mut self, step: usize, total: usize) {
        self.t = if total == 0 {
            0.0
        } else {
            (step as f64 / total as f64).min(1.0)
        };
    }

    pub fn extractor_rate(&self) -> f64 {
        self.config.schedule.rate(self.config.eta0_extractor, self.t)
    }

    pub fn classifier_rate(&self) -> f64 {
        self.config.schedule.rate(self.config.eta0_classifier, self.t)
    }

    pub fn velocity(&self) -> Option<&GradientSet> {
        self.velocity.as_ref()
    }
}

/// One update: `v ← μ v + g + λ θ`, then `θ ← θ − η_p v` with the extractor
/// and classifier groups each using their own annealed rate.
pub fn sgd_step(params: &mut NetworkParams, grads: &GradientSet, state: &mut OptimizerState) -> Result<()> {
    params.check_grad_shape(grads)?;
    if let Some(v) = &state.velocity {
        params.check_grad_shape(v)?;
    }
    let velocity = state.velocity.get_or_insert_with(|| params.zero_grad());
    let (mu, wd) = (state.config.momentum, state.config.weight_decay);
    let n_extractor = params.extractor.len();
    let rates = (state.config.schedule.rate(state.config.eta0_extractor, state.t),
                 state.config.schedule.rate(state.config.eta0_classifier, state.t));

    for (i, ((p, g), v)) in params
        .layers_mut()
        .zip(grads.layers())
        .zip(velocity.layers_mut())
        .enumerate()
    {
        let eta = if i < n_extractor { rates.0 } else { rates.1 };
        Zip::from(&mut p.weight)
            .and(&g.weight)
            .and(&mut v.weight)
            .for_each(|p, &g, v| {
                *v = mu * *v + g + wd * *p;
                *p -= eta * *v;
            });
        Zip::from(&mut p.bias)
            .and(&g.bias)
            .and(&mut v.bias)
            .for_each(|p, &g, v| {
                *v = mu * *v + g + wd * *p;
                *p -= eta * *v;
            });
    }
    Ok(())
}
