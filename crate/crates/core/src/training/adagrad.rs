use crate::error::{MterError, Result};
use crate::factorization::FactorModel;

/// Accumulated squared gradients, one entry per model parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaState {
    pub acc: FactorModel,
}

impl AdaState {
    pub fn new(model: &FactorModel) -> Self {
        Self {
            acc: model.zeros_like(),
        }
    }
}

/// `acc += g²; θ ← max(θ − η g / √(acc + ε), 0)` for every parameter.
///
/// Fails without touching the model if any gradient entry is not finite.
pub fn adagrad_project_step(
    model: &mut FactorModel,
    grads: &FactorModel,
    state: &mut AdaState,
    eta: f64,
    eps: f64,
) -> Result<()> {
    for (name, block) in FactorModel::PARAM_NAMES.iter().zip(grads.params()) {
        if let Some(pos) = block.iter().position(|g| !g.is_finite()) {
            return Err(MterError::NonFinite(format!(
                "gradient of {name}[{pos}] is {}",
                block[pos]
            )));
        }
    }
    for ((theta, g), acc) in model
        .params_mut()
        .into_iter()
        .zip(grads.params())
        .zip(state.acc.params_mut())
    {
        for ((t, &gv), a) in theta.iter_mut().zip(g).zip(acc.iter_mut()) {
            if gv == 0.0 {
                continue;
            }
            *a += gv * gv;
            *t = (*t - eta * gv / (*a + eps).sqrt()).max(0.0);
        }
    }
    Ok(())
}
