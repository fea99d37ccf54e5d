//! Joint objective, analytic gradients, batch sampling and projected AdaGrad.
//!
//! The objective summed over one iteration's samples is
//!
//! ```text
//! Σ_X (X̂ − X)² + Σ_Yu (Ŷu − Yu)² + Σ_Yi (Ŷi − Yi)²
//!   − λ_B Σ_(i,j,l) ln σ(X̂[i,j,p] − X̂[i,l,p])
//!   + λ_F (‖U‖² + ‖I‖² + ‖F̃‖² + ‖O‖²) + λ_G (‖G1‖² + ‖G2‖² + ‖G3‖²)
//! ```
//!
//! where the reconstruction sums run over sampled observed entries only.

mod adagrad;
mod config;
mod loss;
mod sampler;

pub use adagrad::{adagrad_project_step, AdaState};
pub use config::TrainConfig;
pub use loss::{bpr_term, compute_gradients, joint_loss, softplus};
pub use sampler::{full_batch, sample_batches, Batch, BatchSampler, Triple};

use serde::{Deserialize, Serialize};

use crate::error::{MterError, Result};
use crate::factorization::{init_model, FactorModel};
use crate::tensors::TrainingTensors;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub x: f64,
    pub yu: f64,
    pub yi: f64,
    /// BPR term already multiplied by λ_B.
    pub bpr: f64,
    /// L2 penalties already multiplied by λ_F and λ_G.
    pub regularization: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub records: Vec<LossRecord>,
}

impl LossTrace {
    pub fn last(&self) -> Option<&LossRecord> {
        self.records.last()
    }
}

/// Normalized influence of the ranking term: λ_B · N_S · T / (m · n²).
pub fn relative_bpr_weight(config: &TrainConfig, m: usize, n: usize) -> f64 {
    config.lambda_b * config.n_s_bpr as f64 * config.t_iter as f64 / (m as f64 * (n as f64).powi(2))
}

/// Owns the model and optimizer state during training.
pub struct Trainer {
    pub model: FactorModel,
    pub state: AdaState,
    config: TrainConfig,
}

impl Trainer {
    pub fn new(model: FactorModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let state = AdaState::new(&model);
        Ok(Self {
            model,
            state,
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// One gradient + projected AdaGrad update on `batch`.
    pub fn step(&mut self, batch: &Batch) -> Result<()> {
        let grads = compute_gradients(&self.model, batch, &self.config);
        adagrad_project_step(
            &mut self.model,
            &grads,
            &mut self.state,
            self.config.eta,
            self.config.ada_eps,
        )
    }
}

/// Trains from a seeded random initialization. See [`train_with_observer`].
pub fn train(tensors: &TrainingTensors, config: &TrainConfig) -> Result<(FactorModel, LossTrace)> {
    train_with_observer(tensors, config, |_, _| {})
}

/// Runs `t_iter` sample → gradient → update iterations. Every `eval_interval`
/// iterations (and after the last one) the joint loss on a fixed monitor
/// batch is appended to the trace and `observer` sees the model.
pub fn train_with_observer(
    tensors: &TrainingTensors,
    config: &TrainConfig,
    mut observer: impl FnMut(usize, &FactorModel),
) -> Result<(FactorModel, LossTrace)> {
    config.validate()?;
    let [m, n, p1] = tensors.x.dims();
    let q = tensors.yu.dims()[2];
    let model = init_model(
        config.dims,
        m,
        n,
        p1 - 1,
        q.max(1),
        config.seed,
        config.init_scale,
    )?;
    let mut trainer = Trainer::new(model, config.clone())?;
    let sampler = BatchSampler::new(tensors)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut monitor_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let monitor = sampler.sample(config, &mut monitor_rng);

    let mut trace = LossTrace::default();
    for it in 1..=config.t_iter {
        let batch = sampler.sample(config, &mut rng);
        trainer.step(&batch)?;
        if it % config.eval_interval == 0 || it == config.t_iter {
            let mut record = joint_loss(&trainer.model, &monitor, config);
            record.iteration = it;
            if !record.total.is_finite() {
                return Err(MterError::Divergence {
                    iteration: it,
                    total: record.total,
                });
            }
            trace.records.push(record);
            observer(it, &trainer.model);
        }
    }
    Ok((trainer.model, trace))
}
