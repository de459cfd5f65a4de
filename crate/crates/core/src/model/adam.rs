use serde::{Deserialize, Serialize};

use super::network::{Gradients, TargetNetwork};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Gradients,
    second: Gradients,
    step: u64,
}

impl AdamState {
    pub fn new(net: &TargetNetwork, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(AdamState {
            config,
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
            step: 0,
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &Gradients {
        &self.first
    }

    pub fn second_moment(&self) -> &Gradients {
        &self.second
    }
}

/// One bias-corrected Adam update of every parameter in `net`.
pub fn adam_step(net: &mut TargetNetwork, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    let probe = Gradients::zeros_like(net);
    if !grads.same_shape(&probe) || !state.first.same_shape(&probe) {
        return Err(Error::invalid("gradient or optimizer state shape does not match network"));
    }
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.step += 1;
    let t = i32::try_from(state.step).unwrap_or(i32::MAX);
    let correct1 = 1.0 - beta1.powi(t);
    let correct2 = 1.0 - beta2.powi(t);

    let layers = net
        .params_mut()
        .zip(&grads.layers)
        .zip(state.first.layers.iter_mut().zip(state.second.layers.iter_mut()));
    for (((weights, biases), g), (m, v)) in layers {
        let params = weights.iter_mut().chain(biases.iter_mut());
        let gs = g.weights.iter().chain(&g.biases);
        let ms = m.weights.iter_mut().chain(m.biases.iter_mut());
        let vs = v.weights.iter_mut().chain(v.biases.iter_mut());
        for (((w, &g), m), v) in params.zip(gs).zip(ms).zip(vs) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / correct1;
            let v_hat = *v / correct2;
            *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            if !w.is_finite() {
                return Err(Error::Numerical {
                    epoch: 0,
                    batch: 0,
                    instance: 0,
                    detail: format!("non-finite parameter after Adam step {}", state.step),
                });
            }
        }
    }
    Ok(())
}
