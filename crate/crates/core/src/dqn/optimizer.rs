use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::network::{Gradients, NetworkParameters};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { kind: OptimizerKind::Adam, learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates plus the bias-correction step count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: NetworkParameters,
    pub v: NetworkParameters,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &NetworkParameters) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }
}

/// Applies one update. A non-finite gradient is rejected before anything is touched.
pub fn optimizer_step(
    params: &mut NetworkParameters,
    grads: &Gradients,
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
) -> Result<()> {
    if params.layer_sizes() != grads.layer_sizes() || params.layer_sizes() != state.m.layer_sizes() {
        return Err(Error::DimensionMismatch {
            context: "optimizer shapes",
            expected: params.param_count(),
            got: grads.param_count(),
        });
    }
    if !grads.all_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    state.step += 1;
    let lr = cfg.learning_rate;
    match cfg.kind {
        OptimizerKind::Sgd => {
            for (w, g) in params.values_mut().zip(grads.values()) {
                *w -= lr * g;
            }
        }
        OptimizerKind::Adam => {
            let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.epsilon);
            let t = state.step.min(i32::MAX as u64) as i32;
            let c1 = 1.0 - b1.powi(t);
            let c2 = 1.0 - b2.powi(t);
            let layers = params
                .layers_mut()
                .iter_mut()
                .zip(grads.layers())
                .zip(state.m.layers_mut().iter_mut().zip(state.v.layers_mut()));
            for ((p, g), (m, v)) in layers {
                let update = |w: &mut f64, &g: &f64, m: &mut f64, v: &mut f64| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                };
                Zip::from(&mut p.weights).and(&g.weights).and(&mut m.weights).and(&mut v.weights).for_each(update);
                Zip::from(&mut p.bias).and(&g.bias).and(&mut m.bias).and(&mut v.bias).for_each(update);
            }
        }
    }
    Ok(())
}
