use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// AdaDelta hyper-parameters; `learning_rate` scales the adaptive step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaDeltaConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub eps: f64,
}

/// Running averages of squared gradients and squared updates for one tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaDeltaState<S> {
    pub mean_sq_grad: Vec<S>,
    pub mean_sq_update: Vec<S>,
}

impl<S: Scalar> AdaDeltaState<S> {
    pub fn zeros(len: usize) -> Self {
        AdaDeltaState {
            mean_sq_grad: vec![S::zero(); len],
            mean_sq_update: vec![S::zero(); len],
        }
    }
}

/// One AdaDelta step on `param` in place.
///
/// `E[g²] ← ρE[g²] + (1−ρ)g²`, `Δ = −√(E[Δ²]+ε)/√(E[g²]+ε)·g`, `E[Δ²] ← ρE[Δ²] + (1−ρ)Δ²`,
/// `param ← param + lr·Δ`.
pub fn adadelta_update<S: Scalar>(
    param: &mut Tensor<S>,
    grad: &Tensor<S>,
    state: &mut AdaDeltaState<S>,
    config: &AdaDeltaConfig,
) -> Result<()> {
    if param.shape() != grad.shape() {
        return Err(Error::shape("adadelta", param.shape(), grad.shape()));
    }
    if state.mean_sq_grad.len() != param.len() || state.mean_sq_update.len() != param.len() {
        return Err(Error::InvalidArgument("optimizer state does not match parameter".into()));
    }
    let rho: S = lit(config.rho);
    let one_minus_rho = S::one() - rho;
    let eps: S = lit(config.eps);
    let lr: S = lit(config.learning_rate);
    let values = param.data_mut();
    for (i, &g) in grad.data().iter().enumerate() {
        let eg = rho * state.mean_sq_grad[i] + one_minus_rho * g * g;
        state.mean_sq_grad[i] = eg;
        let delta = -((state.mean_sq_update[i] + eps).sqrt() / (eg + eps).sqrt()) * g;
        state.mean_sq_update[i] = rho * state.mean_sq_update[i] + one_minus_rho * delta * delta;
        values[i] += lr * delta;
    }
    Ok(())
}

/// One [`AdaDeltaState`] per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaDelta<S> {
    pub config: AdaDeltaConfig,
    states: Vec<AdaDeltaState<S>>,
}

impl<S: Scalar> AdaDelta<S> {
    pub fn new(params: &ParamSet<S>, config: AdaDeltaConfig) -> Self {
        AdaDelta {
            config,
            states: params.iter().map(|(_, _, t)| AdaDeltaState::zeros(t.len())).collect(),
        }
    }

    pub fn states(&self) -> &[AdaDeltaState<S>] {
        &self.states
    }

    /// Applies one update to every parameter using `grads`.
    pub fn step(&mut self, params: &mut ParamSet<S>, grads: &Gradients<S>) -> Result<()> {
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            adadelta_update(params.get_mut(id), grads.get(id), &mut self.states[id.index()], &self.config)?;
        }
        Ok(())
    }
}
