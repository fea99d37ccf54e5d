use serde::{Deserialize, Serialize};

use crate::error::{MterError, Result};
use crate::factorization::Dims;

/// Hyperparameters for joint training. Field names double as keys in the
/// flat config file accepted by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda_b: f64,
    pub lambda_f: f64,
    pub lambda_g: f64,
    pub batch_x: usize,
    pub batch_yu: usize,
    pub batch_yi: usize,
    pub n_s_bpr: usize,
    pub t_iter: usize,
    pub eta: f64,
    pub ada_eps: f64,
    pub seed: u64,
    #[serde(flatten)]
    pub dims: Dims,
    pub init_scale: f64,
    pub eval_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_b: 1.0,
            lambda_f: 0.01,
            lambda_g: 0.01,
            batch_x: 256,
            batch_yu: 128,
            batch_yi: 128,
            n_s_bpr: 256,
            t_iter: 20_000,
            eta: 0.05,
            ada_eps: 1e-8,
            seed: 0,
            dims: Dims::default(),
            init_scale: 0.5,
            eval_interval: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("lambda_b", self.lambda_b),
            ("lambda_f", self.lambda_f),
            ("lambda_g", self.lambda_g),
        ];
        for (name, w) in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(MterError::Config(format!("{name} must be >= 0, got {w}")));
            }
        }
        let sizes = [
            ("batch_x", self.batch_x),
            ("batch_yu", self.batch_yu),
            ("batch_yi", self.batch_yi),
            ("n_s_bpr", self.n_s_bpr),
            ("eval_interval", self.eval_interval),
        ];
        for (name, s) in sizes {
            if s == 0 {
                return Err(MterError::Config(format!("{name} must be >= 1")));
            }
        }
        for (name, v) in [
            ("eta", self.eta),
            ("ada_eps", self.ada_eps),
            ("init_scale", self.init_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MterError::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        self.dims.validate()
    }
}
