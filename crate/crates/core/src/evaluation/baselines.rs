use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::recommendation::Scorer;
use crate::corpus::IndexedCorpus;
use crate::dense::Matrix;
use crate::error::{MterError, Result};
use crate::tensors::TrainingTensors;
use crate::training::{BatchSampler, TrainConfig};

/// Non-personalized ranking by training review count.
#[derive(Debug, Clone, PartialEq)]
pub struct MostPopular {
    counts: Vec<f64>,
}

impl MostPopular {
    /// Global ranking, most reviewed first, ties by ascending index.
    pub fn ranking(&self) -> Vec<usize> {
        crate::ranking::rank_candidates(self.counts.clone(), &[], self.counts.len())
            .into_iter()
            .map(|(j, _)| j)
            .collect()
    }
}

impl Scorer for MostPopular {
    fn scores(&self, _user: usize) -> Result<Vec<f64>> {
        Ok(self.counts.clone())
    }
}

pub fn most_popular_baseline(train: &IndexedCorpus) -> MostPopular {
    let mut counts = vec![0.0; train.n()];
    for r in &train.reviews {
        counts[r.item] += 1.0;
    }
    MostPopular { counts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BprMfConfig {
    pub dim: usize,
    pub lambda: f64,
    pub eta: f64,
    pub iterations: usize,
    pub pairs_per_iter: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl BprMfConfig {
    /// Latent size `a`, `λ_F`, `η`, iterations, pair batch size and seed from
    /// a joint training config.
    pub fn from_train_config(c: &TrainConfig) -> Self {
        Self {
            dim: c.dims.a,
            lambda: c.lambda_f,
            eta: c.eta,
            iterations: c.t_iter,
            pairs_per_iter: c.n_s_bpr,
            init_scale: 0.1,
            seed: c.seed,
        }
    }
}

/// Matrix factorization trained on preference pairs; score = `U[i] · I[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BprMf {
    pub users: Matrix,
    pub items: Matrix,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl BprMf {
    pub fn predict(&self, user: usize, item: usize) -> f64 {
        dot(self.users.row(user), self.items.row(item))
    }

    /// Gradients of `w · softplus(−(x̂_ij − x̂_il)) + λ(‖U_i‖² + ‖I_j‖² + ‖I_l‖²)`
    /// with respect to `U_i`, `I_j` and `I_l`.
    pub fn pair_gradients(
        &self,
        (i, j, l): (usize, usize, usize),
        lambda: f64,
        loss_weight: f64,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (u, vj, vl) = (self.users.row(i), self.items.row(j), self.items.row(l));
        let diff = dot(u, vj) - dot(u, vl);
        // −σ(−diff) · loss_weight
        let s = -loss_weight / (1.0 + diff.exp());
        let gu = u
            .iter()
            .zip(vj.iter().zip(vl))
            .map(|(&uu, (&a, &b))| s * (a - b) + 2.0 * lambda * uu)
            .collect();
        let gj = u
            .iter()
            .zip(vj)
            .map(|(&uu, &a)| s * uu + 2.0 * lambda * a)
            .collect();
        let gl = u
            .iter()
            .zip(vl)
            .map(|(&uu, &b)| -s * uu + 2.0 * lambda * b)
            .collect();
        (gu, gj, gl)
    }
}

impl Scorer for BprMf {
    fn scores(&self, user: usize) -> Result<Vec<f64>> {
        if user >= self.users.rows() {
            return Err(MterError::IndexOutOfRange {
                what: "user",
                index: user,
                len: self.users.rows(),
            });
        }
        Ok((0..self.items.rows())
            .map(|j| self.predict(user, j))
            .collect())
    }
}

/// Per-pair SGD over pairs drawn with the same sampler as joint training.
pub fn bprmf_baseline(train: &IndexedCorpus, config: &BprMfConfig) -> Result<BprMf> {
    if config.dim == 0
        || !(config.eta > 0.0)
        || !(config.lambda >= 0.0)
        || !(config.init_scale > 0.0)
    {
        return Err(MterError::Config(format!(
            "invalid BPRMF config: {config:?}"
        )));
    }
    let tensors = TrainingTensors::from_corpus(train)?;
    let sampler = BatchSampler::new(&tensors)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut init = |rows: usize| {
        let data = (0..rows * config.dim)
            .map(|_| rng.random_range(-1.0..1.0) * config.init_scale)
            .collect();
        Matrix::from_vec(rows, config.dim, data)
    };
    let users = init(train.m())?;
    let items = init(train.n())?;
    let mut model = BprMf { users, items };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    for it in 0..config.iterations {
        for _ in 0..config.pairs_per_iter {
            let Some((i, j, l)) = sampler.sample_pair(&mut rng) else {
                continue;
            };
            let (gu, gj, gl) = model.pair_gradients((i, j, l), config.lambda, 1.0);
            for (v, g) in model.users.row_mut(i).iter_mut().zip(&gu) {
                *v -= config.eta * g;
            }
            for (v, g) in model.items.row_mut(j).iter_mut().zip(&gj) {
                *v -= config.eta * g;
            }
            for (v, g) in model.items.row_mut(l).iter_mut().zip(&gl) {
                *v -= config.eta * g;
            }
        }
        if !model
            .users
            .as_slice()
            .iter()
            .chain(model.items.as_slice())
            .all(|v| v.is_finite())
        {
            return Err(MterError::Divergence {
                iteration: it + 1,
                total: f64::NAN,
            });
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ReviewRecord;

    fn corpus(rows: &[(&str, &str, u32)]) -> IndexedCorpus {
        let recs: Vec<_> = rows
            .iter()
            .map(|(u, i, r)| ReviewRecord {
                user: u.to_string(),
                item: i.to_string(),
                rating: *r,
                tuples: vec![],
            })
            .collect();
        IndexedCorpus::from_records(&recs, 5)
    }

    #[test]
    fn most_popular_orders_by_count() {
        let mut rows = vec![];
        for u in 0..10 {
            rows.push((format!("u{u}"), "hot", 3));
        }
        for u in 0..3 {
            rows.push((format!("u{u}"), "warm", 3));
        }
        rows.push(("u0".into(), "a", 3));
        rows.push(("u1".into(), "b", 3));
        let rows: Vec<(&str, &str, u32)> =
            rows.iter().map(|(u, i, r)| (u.as_str(), *i, *r)).collect();
        let c = corpus(&rows);
        let mp = most_popular_baseline(&c);
        // hot=0, warm=1, a=2, b=3
        assert_eq!(mp.ranking(), vec![0, 1, 2, 3]);
        assert_eq!(mp.scores(0).unwrap(), mp.scores(5).unwrap());
    }

    #[test]
    fn separable_pairs_are_learnt() {
        let c = corpus(&[("u0", "x", 5), ("u1", "y", 5)]);
        let cfg = BprMfConfig {
            dim: 2,
            lambda: 0.01,
            eta: 0.1,
            iterations: 200,
            pairs_per_iter: 4,
            init_scale: 0.1,
            seed: 3,
        };
        let m = bprmf_baseline(&c, &cfg).unwrap();
        assert!(m.predict(0, 0) > m.predict(0, 1));
        assert!(m.predict(1, 1) > m.predict(1, 0));
        let again = bprmf_baseline(&c, &cfg).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn regularization_only_gradient() {
        let c = corpus(&[("u0", "x", 5), ("u1", "y", 5)]);
        let cfg = BprMfConfig {
            dim: 3,
            lambda: 0.0,
            eta: 0.1,
            iterations: 0,
            pairs_per_iter: 1,
            init_scale: 0.5,
            seed: 1,
        };
        let m = bprmf_baseline(&c, &cfg).unwrap();
        let (gu, gj, gl) = m.pair_gradients((0, 0, 1), 0.25, 0.0);
        for k in 0..3 {
            assert!((gu[k] - 0.5 * m.users[(0, k)]).abs() < 1e-15);
            assert!((gj[k] - 0.5 * m.items[(0, k)]).abs() < 1e-15);
            assert!((gl[k] - 0.5 * m.items[(1, k)]).abs() < 1e-15);
        }
    }
}
