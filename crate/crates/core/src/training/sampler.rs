use rand::Rng;

use super::TrainConfig;
use crate::error::{MterError, Result};
use crate::tensors::{SparseTensor3, TrainingTensors};

/// Coordinate and observed value.
pub type Triple = ([usize; 3], f64);

/// One iteration's samples. `pairs` holds `(user, preferred, other)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub x: Vec<Triple>,
    pub yu: Vec<Triple>,
    pub yi: Vec<Triple>,
    pub pairs: Vec<(usize, usize, usize)>,
}

/// Attempts per emitted pair before the pair is skipped.
const PAIR_ATTEMPTS: usize = 32;

/// Uniform-with-replacement sampler over stored tensor entries plus the
/// two-branch preference-pair sampler.
///
/// A pair attempt draws an observed (user, item) rating uniformly, so users
/// are drawn in proportion to their number of rated items. With probability
/// 1/2 the other item is a uniformly chosen strictly lower-rated item of the
/// same user, otherwise a uniformly chosen item the user has not rated. An
/// attempt whose branch has no candidate is retried.
pub struct BatchSampler<'a> {
    tensors: &'a TrainingTensors,
    observed: Vec<(usize, usize, u32)>,
    /// Sorted rated items per user.
    rated_items: Vec<Vec<usize>>,
}

impl<'a> BatchSampler<'a> {
    pub fn new(tensors: &'a TrainingTensors) -> Result<Self> {
        if tensors.x.is_empty() {
            return Err(MterError::Validation("training tensor is empty".into()));
        }
        let pairs = &tensors.pairs;
        let observed: Vec<_> = tensors
            .ratings
            .iter()
            .map(|((i, j), r)| (i, j, r))
            .collect();
        let rated_items = (0..pairs.n_users())
            .map(|i| {
                let mut v: Vec<usize> = pairs.rated(i).iter().map(|&(j, _)| j).collect();
                v.sort_unstable();
                v
            })
            .collect();
        Ok(Self {
            tensors,
            observed,
            rated_items,
        })
    }

    fn draw(entries: &SparseTensor3, count: usize, rng: &mut impl Rng) -> Vec<Triple> {
        if entries.is_empty() {
            return Vec::new();
        }
        let all = entries.entries();
        (0..count)
            .map(|_| all[rng.random_range(0..all.len())])
            .collect()
    }

    pub fn sample(&self, config: &TrainConfig, rng: &mut impl Rng) -> Batch {
        let x = Self::draw(&self.tensors.x, config.batch_x, rng);
        let yu = Self::draw(&self.tensors.yu, config.batch_yu, rng);
        let yi = Self::draw(&self.tensors.yi, config.batch_yi, rng);
        let pairs = if config.lambda_b > 0.0 {
            (0..config.n_s_bpr)
                .filter_map(|_| self.sample_pair(rng))
                .collect()
        } else {
            Vec::new()
        };
        Batch { x, yu, yi, pairs }
    }

    pub fn sample_pair(&self, rng: &mut impl Rng) -> Option<(usize, usize, usize)> {
        if self.observed.is_empty() {
            return None;
        }
        let n = self.tensors.pairs.n_items();
        for _ in 0..PAIR_ATTEMPTS {
            let (i, j, rating) = self.observed[rng.random_range(0..self.observed.len())];
            if rng.random_bool(0.5) {
                let below = self.tensors.pairs.count_below(i, rating);
                if below == 0 {
                    continue;
                }
                let l = self.tensors.pairs.rated(i)[rng.random_range(0..below)].0;
                return Some((i, j, l));
            }
            let rated = &self.rated_items[i];
            if rated.len() >= n {
                continue;
            }
            loop {
                let l = rng.random_range(0..n);
                if rated.binary_search(&l).is_err() {
                    return Some((i, j, l));
                }
            }
        }
        None
    }
}

/// Draws one iteration's batches. Convenience wrapper over [`BatchSampler`].
pub fn sample_batches(
    tensors: &TrainingTensors,
    config: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<Batch> {
    Ok(BatchSampler::new(tensors)?.sample(config, rng))
}

/// Every stored entry once and every explicit rated-vs-rated pair once.
pub fn full_batch(tensors: &TrainingTensors) -> Batch {
    let pairs = (0..tensors.pairs.n_users())
        .flat_map(|i| {
            tensors
                .pairs
                .explicit_pairs(i)
                .iter()
                .map(move |&(j, l)| (i, j, l))
        })
        .collect();
    Batch {
        x: tensors.x.entries().to_vec(),
        yu: tensors.yu.entries().to_vec(),
        yi: tensors.yi.entries().to_vec(),
        pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{IndexedCorpus, LexiconEntry, Polarity, ReviewRecord};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    /// Users: u0 rates a:5, b:3, c:3; u1 rates a:2; u2 rates a:4, b:4, c:1, d:1.
    /// Items a..e (e is never rated).
    fn toy() -> TrainingTensors {
        let rows = [
            ("u0", "a", 5),
            ("u0", "b", 3),
            ("u0", "c", 3),
            ("u1", "a", 2),
            ("u2", "a", 4),
            ("u2", "b", 4),
            ("u2", "c", 1),
            ("u2", "d", 1),
            ("u1", "e", 3),
        ];
        let recs: Vec<_> = rows
            .iter()
            .map(|(u, i, r)| ReviewRecord {
                user: u.to_string(),
                item: i.to_string(),
                rating: *r,
                tuples: vec![LexiconEntry::new("f", "o", Polarity::Positive)],
            })
            .collect();
        let c = IndexedCorpus::from_records(&recs, 5);
        // item e stays in the id space but has no training review
        let train = c.with_reviews(c.reviews[..8].to_vec());
        TrainingTensors::from_corpus(&train).unwrap()
    }

    /// Exact emission probabilities of the pair sampler, by enumeration of
    /// one attempt and conditioning on success.
    fn exact_law(t: &TrainingTensors) -> HashMap<(usize, usize, usize), f64> {
        let obs: Vec<_> = t.ratings.iter().collect();
        let n = t.pairs.n_items();
        let mut law = HashMap::new();
        for &((i, j), r) in &obs {
            let p_obs = 1.0 / obs.len() as f64;
            let lower: Vec<usize> = t
                .pairs
                .rated(i)
                .iter()
                .filter(|&&(_, rl)| rl < r)
                .map(|&(l, _)| l)
                .collect();
            for &l in &lower {
                *law.entry((i, j, l)).or_insert(0.0) += p_obs * 0.5 / lower.len() as f64;
            }
            let unrated: Vec<usize> = (0..n).filter(|&l| t.pairs.rating(i, l).is_none()).collect();
            for &l in &unrated {
                *law.entry((i, j, l)).or_insert(0.0) += p_obs * 0.5 / unrated.len() as f64;
            }
        }
        let total: f64 = law.values().sum();
        law.values_mut().for_each(|v| *v /= total);
        law
    }

    #[test]
    fn pair_frequencies_follow_sampling_law() {
        let t = toy();
        let law = exact_law(&t);
        let s = BatchSampler::new(&t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 10_000;
        let mut counts: HashMap<(usize, usize, usize), usize> = HashMap::new();
        for _ in 0..draws {
            let pair = s.sample_pair(&mut rng).unwrap();
            assert!(t.pairs.contains(pair.0, pair.1, pair.2), "{pair:?}");
            *counts.entry(pair).or_insert(0) += 1;
        }
        for (pair, c) in &counts {
            assert!(law.contains_key(pair), "unexpected pair {pair:?}");
            let _ = c;
        }
        for (pair, p) in &law {
            let expected = p * draws as f64;
            let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
            let got = *counts.get(pair).unwrap_or(&0) as f64;
            assert!(
                (got - expected).abs() <= 3.0 * sigma.max(1.0),
                "{pair:?}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn batch_sizes_and_determinism() {
        let t = toy();
        let cfg = TrainConfig {
            batch_x: 5,
            batch_yu: 3,
            batch_yi: 2,
            n_s_bpr: 7,
            ..TrainConfig::default()
        };
        let a = sample_batches(&t, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = sample_batches(&t, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            (a.x.len(), a.yu.len(), a.yi.len(), a.pairs.len()),
            (5, 3, 2, 7)
        );
        for (idx, v) in &a.x {
            assert_eq!(t.x.get(*idx), Some(*v));
        }
    }

    #[test]
    fn user_without_candidates_is_skipped() {
        // single user who rated every item with the same rating
        let recs: Vec<_> = ["a", "b"]
            .iter()
            .map(|i| ReviewRecord {
                user: "u".into(),
                item: i.to_string(),
                rating: 4,
                tuples: vec![],
            })
            .collect();
        let c = IndexedCorpus::from_records(&recs, 5);
        let t = TrainingTensors::from_corpus(&c).unwrap();
        let s = BatchSampler::new(&t).unwrap();
        assert_eq!(s.sample_pair(&mut ChaCha8Rng::seed_from_u64(0)), None);
    }
}
