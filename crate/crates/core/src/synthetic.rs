//! Seeded generators for synthetic corpora and planted models.
//!
//! These back the recovery, ranking and permutation experiments in the test
//! suites and benches, and are handy for trying the pipeline without data.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{IndexedCorpus, Lexicon, LexiconEntry, Polarity, ReviewRecord};
use crate::dense::{Matrix, Tensor3};
use crate::error::{MterError, Result};
use crate::factorization::{Dims, FactorModel};
use crate::tensors::{build_pair_sets, RatingTable, SparseTensor3, TrainingTensors};
use crate::training::Triple;

fn uniform(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

/// Non-negative model with every parameter uniform in `[lo, hi)`.
pub fn planted_model(
    dims: Dims,
    [m, n, p, q]: [usize; 4],
    (lo, hi): (f64, f64),
    seed: u64,
) -> Result<FactorModel> {
    dims.validate()?;
    if !(0.0 <= lo && lo < hi) {
        return Err(MterError::Config(format!(
            "bad parameter range [{lo}, {hi})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let Dims { a, b, c, d } = dims;
    let mut mat = |r: usize, k: usize| Matrix::from_vec(r, k, uniform(&mut rng, r * k, lo, hi));
    let (users, items, features, opinions) = (mat(m, a)?, mat(n, b)?, mat(p + 1, c)?, mat(q, d)?);
    let mut ten =
        |s: [usize; 3]| Tensor3::from_vec(s, uniform(&mut rng, s[0] * s[1] * s[2], lo, hi));
    let (g1, g2, g3) = (ten([a, b, c])?, ten([a, c, d])?, ten([b, c, d])?);
    FactorModel::from_parts(users, items, features, opinions, g1, g2, g3)
}

/// Every X, Y^U and Y^I entry of a model, split into training tensors and
/// held-out entries.
#[derive(Debug, Clone)]
pub struct PlantedData {
    pub train: TrainingTensors,
    pub heldout_x: Vec<Triple>,
    pub heldout_yu: Vec<Triple>,
    pub heldout_yi: Vec<Triple>,
}

impl PlantedData {
    pub fn heldout_len(&self) -> usize {
        self.heldout_x.len() + self.heldout_yu.len() + self.heldout_yi.len()
    }
}

/// Densely evaluates `model` and moves a `holdout` fraction of each tensor's
/// entries to the held-out sets. No ratings or preference pairs are recorded.
pub fn planted_tensors(model: &FactorModel, holdout: f64, seed: u64) -> Result<PlantedData> {
    if !(0.0..1.0).contains(&holdout) {
        return Err(MterError::Config(format!(
            "holdout must be in [0, 1), got {holdout}"
        )));
    }
    let (m, n, p, q) = (model.m(), model.n(), model.p(), model.q());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = |dims: [usize; 3],
                     value: &dyn Fn(usize, usize, usize) -> f64|
     -> Result<(SparseTensor3, Vec<Triple>)> {
        let mut kept = Vec::new();
        let mut held = Vec::new();
        for x in 0..dims[0] {
            for y in 0..dims[1] {
                for z in 0..dims[2] {
                    let t = ([x, y, z], value(x, y, z));
                    if rng.random_bool(holdout) {
                        held.push(t);
                    } else {
                        kept.push(t);
                    }
                }
            }
        }
        Ok((SparseTensor3::new(dims, kept)?, held))
    };
    let (x, heldout_x) = split([m, n, p + 1], &|i, j, k| model.x_unchecked(i, j, k))?;
    let (yu, heldout_yu) = split([m, p, q], &|i, k, w| model.yu_unchecked(i, k, w))?;
    let (yi, heldout_yi) = split([n, p, q], &|j, k, w| model.yi_unchecked(j, k, w))?;
    let mut ratings = RatingTable::default();
    (ratings.m, ratings.n) = (m, n);
    let pairs = build_pair_sets(&ratings);
    Ok(PlantedData {
        train: TrainingTensors {
            x,
            yu,
            yi,
            ratings,
            pairs,
        },
        heldout_x,
        heldout_yu,
        heldout_yi,
    })
}

/// `sqrt(Σ (pred − v)²) / sqrt(Σ v²)` over all held-out entries.
pub fn heldout_relative_rmse(model: &FactorModel, data: &PlantedData) -> f64 {
    let mut err = 0.0;
    let mut norm = 0.0;
    let groups: [(&[Triple], &dyn Fn([usize; 3]) -> f64); 3] = [
        (&data.heldout_x, &|[i, j, k]| model.x_unchecked(i, j, k)),
        (&data.heldout_yu, &|[i, k, w]| model.yu_unchecked(i, k, w)),
        (&data.heldout_yi, &|[j, k, w]| model.yi_unchecked(j, k, w)),
    ];
    for (entries, predict) in groups {
        for &(idx, v) in entries {
            err += (predict(idx) - v).powi(2);
            norm += v * v;
        }
    }
    (err / norm).sqrt()
}

fn zipf(len: usize, exponent: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=len).map(|r| (r as f64).powf(-exponent))).expect("positive weights")
}

fn phrase_name(feature: usize, polarity: Polarity, k: usize) -> String {
    match polarity {
        Polarity::Positive => format!("f{feature}_good{k}"),
        Polarity::Negative => format!("f{feature}_bad{k}"),
    }
}

fn lexicon(features: usize, phrases: usize) -> Lexicon {
    Lexicon::from_entries((0..features).flat_map(|f| {
        [Polarity::Positive, Polarity::Negative]
            .into_iter()
            .flat_map(move |s| {
                (0..phrases)
                    .map(move |k| LexiconEntry::new(format!("f{f}"), phrase_name(f, s, k), s))
            })
    }))
}

/// Corpus where ratings and item choice follow user feature preferences and
/// item feature quality.
///
/// Every item belongs to one of `item_types` quality profiles over the
/// features, perturbed per item. Every user cares about `user_features`
/// features with random weights, and with probability `taste_flip` prefers
/// low rather than high quality on each of them. Users are drawn from
/// `user_types` archetypes when that is non-zero. A user's affinity to an
/// item is the weighted satisfaction over the features they care about; items are picked with probability
/// proportional to `popularity^-popularity_exponent · exp(choice_sharpness ·
/// affinity)`. Reviews mention features the user cares about (and, with
/// probability `item_mention`, a feature chosen uniformly), praising features
/// whose satisfaction exceeds 1/2. Phrases follow a per-user habit with
/// probability `phrase_habit`, otherwise the feature's Zipf popularity.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceSpec {
    pub users: usize,
    pub items: usize,
    pub features: usize,
    pub phrases_per_polarity: usize,
    pub item_types: usize,
    pub quality_noise: f64,
    pub user_features: usize,
    pub taste_flip: f64,
    pub user_types: usize,
    pub reviews_per_user: (usize, usize),
    pub tuples_per_review: usize,
    pub item_mention: f64,
    pub popularity_exponent: f64,
    pub choice_sharpness: f64,
    pub rating_noise: f64,
    pub phrase_habit: f64,
    pub rating_max: u32,
}

impl Default for PreferenceSpec {
    fn default() -> Self {
        Self {
            users: 300,
            items: 200,
            features: 12,
            phrases_per_polarity: 4,
            item_types: 6,
            quality_noise: 0.15,
            user_features: 3,
            taste_flip: 0.0,
            user_types: 0,
            reviews_per_user: (6, 12),
            tuples_per_review: 3,
            item_mention: 0.3,
            popularity_exponent: 0.8,
            choice_sharpness: 8.0,
            rating_noise: 0.5,
            phrase_habit: 0.5,
            rating_max: 5,
        }
    }
}

/// Reviews plus the lexicon that covers all of their tuples.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub lexicon: Lexicon,
    pub reviews: Vec<ReviewRecord>,
}

pub fn preference_corpus(spec: &PreferenceSpec, seed: u64) -> Result<SyntheticCorpus> {
    let (lo, hi) = spec.reviews_per_user;
    if spec.users == 0
        || spec.features == 0
        || spec.item_types == 0
        || spec.phrases_per_polarity == 0
    {
        return Err(MterError::Config(
            "synthetic corpus needs users, features, item types and phrases".into(),
        ));
    }
    if lo == 0
        || lo > hi
        || hi > spec.items
        || spec.user_features == 0
        || spec.user_features > spec.features
    {
        return Err(MterError::Config(format!(
            "inconsistent synthetic corpus spec: {spec:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p, n_max) = (spec.features, f64::from(spec.rating_max));

    let profiles: Vec<Vec<f64>> = (0..spec.item_types)
        .map(|_| uniform(&mut rng, p, 0.0, 1.0))
        .collect();
    let quality: Vec<Vec<f64>> = (0..spec.items)
        .map(|_| {
            let t = rng.random_range(0..spec.item_types);
            profiles[t]
                .iter()
                .map(|&v| (v + spec.quality_noise * rng.random_range(-1.0..1.0)).clamp(0.0, 1.0))
                .collect()
        })
        .collect();
    let popularity: Vec<f64> = (0..spec.items)
        .map(|j| ((j + 1) as f64).powf(-spec.popularity_exponent))
        .collect();
    let phrase_pop = zipf(spec.phrases_per_polarity, 1.0);

    // (cared features, direction per cared feature, raw weights)
    let taste = |rng: &mut ChaCha8Rng| {
        let cares = sample(rng, p, spec.user_features).into_vec();
        let flips: Vec<bool> = cares
            .iter()
            .map(|_| rng.random_bool(spec.taste_flip))
            .collect();
        (cares, flips, uniform(rng, spec.user_features, 0.2, 1.0))
    };
    let archetypes: Vec<_> = (0..spec.user_types).map(|_| taste(&mut rng)).collect();

    let mut reviews = Vec::new();
    for i in 0..spec.users {
        let (cares, flips, raw) = if archetypes.is_empty() {
            taste(&mut rng)
        } else {
            let (c, f, w) = &archetypes[rng.random_range(0..archetypes.len())];
            let w = w
                .iter()
                .map(|&v| v * rng.random_range(0.75..1.25))
                .collect();
            (c.clone(), f.clone(), w)
        };
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        // How satisfied the user is with feature f of item j.
        let satisfaction = |j: usize, f: usize| match cares.iter().position(|&c| c == f) {
            Some(k) if flips[k] => 1.0 - quality[j][f],
            _ => quality[j][f],
        };
        let affinity: Vec<f64> = (0..spec.items)
            .map(|j| {
                cares
                    .iter()
                    .zip(&weights)
                    .map(|(&f, w)| w * satisfaction(j, f))
                    .sum()
            })
            .collect();
        let habit: Vec<[usize; 2]> = (0..p)
            .map(|_| [phrase_pop.sample(&mut rng), phrase_pop.sample(&mut rng)])
            .collect();

        let count = rng.random_range(lo..=hi);
        let mut choice: Vec<f64> = (0..spec.items)
            .map(|j| popularity[j] * (spec.choice_sharpness * affinity[j]).exp())
            .collect();
        let mention = WeightedIndex::new(&weights).expect("positive weights");
        for _ in 0..count {
            let j = WeightedIndex::new(&choice)
                .expect("items remain")
                .sample(&mut rng);
            choice[j] = 0.0;
            let noisy =
                1.0 + (n_max - 1.0) * affinity[j] + spec.rating_noise * rng.random_range(-1.0..1.0);
            let rating = noisy.round().clamp(1.0, n_max) as u32;
            let mut tuples = Vec::new();
            for _ in 0..spec.tuples_per_review {
                let f = if rng.random_bool(spec.item_mention) {
                    rng.random_range(0..p)
                } else {
                    cares[mention.sample(&mut rng)]
                };
                let polarity = if satisfaction(j, f) > 0.5 {
                    Polarity::Positive
                } else {
                    Polarity::Negative
                };
                let slot = usize::from(polarity == Polarity::Negative);
                let k = if rng.random_bool(spec.phrase_habit) {
                    habit[f][slot]
                } else {
                    phrase_pop.sample(&mut rng)
                };
                tuples.push(LexiconEntry::new(
                    format!("f{f}"),
                    phrase_name(f, polarity, k),
                    polarity,
                ));
            }
            reviews.push(ReviewRecord {
                user: format!("u{i}"),
                item: format!("i{j}"),
                rating,
                tuples,
            });
        }
    }
    Ok(SyntheticCorpus {
        lexicon: lexicon(p, spec.phrases_per_polarity),
        reviews,
    })
}

/// Corpus for phrase-reuse tests. Each mention draws its phrase from the
/// feature's Zipf popularity, except that with probability `dependence` the
/// user's personal phrase for that feature is used instead. `dependence = 0`
/// is the popularity-only null.
#[derive(Debug, Clone, PartialEq)]
pub struct OpinionCorpusSpec {
    pub users: usize,
    pub items: usize,
    pub features: usize,
    pub phrases: usize,
    pub reviews_per_user: usize,
    pub tuples_per_review: usize,
    pub phrase_exponent: f64,
    pub dependence: f64,
}

impl Default for OpinionCorpusSpec {
    fn default() -> Self {
        Self {
            users: 60,
            items: 40,
            features: 5,
            phrases: 8,
            reviews_per_user: 5,
            tuples_per_review: 3,
            phrase_exponent: 1.0,
            dependence: 0.0,
        }
    }
}

pub fn opinion_corpus(spec: &OpinionCorpusSpec, seed: u64) -> IndexedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pop = zipf(spec.phrases.max(1), spec.phrase_exponent);
    let mut records = Vec::new();
    for i in 0..spec.users {
        let personal: Vec<usize> = (0..spec.features).map(|_| pop.sample(&mut rng)).collect();
        for _ in 0..spec.reviews_per_user {
            let j = rng.random_range(0..spec.items.max(1));
            let tuples = (0..spec.tuples_per_review)
                .map(|_| {
                    let f = rng.random_range(0..spec.features.max(1));
                    let k = if rng.random_bool(spec.dependence) {
                        personal[f]
                    } else {
                        pop.sample(&mut rng)
                    };
                    LexiconEntry::new(format!("f{f}"), format!("f{f}_w{k}"), Polarity::Positive)
                })
                .collect();
            records.push(ReviewRecord {
                user: format!("u{i}"),
                item: format!("i{j}"),
                rating: rng.random_range(1..=5),
                tuples,
            });
        }
    }
    IndexedCorpus::from_records(&records, 5)
}
