//! Observation tensors built from a training corpus.
//!
//! Only observed cells are stored. The user × item × feature tensor carries
//! the overall rating as its last feature slice (index `p`).

use std::collections::BTreeMap;
use std::io::{self, Write};

use crate::corpus::IndexedCorpus;
use crate::error::{MterError, Result};

/// Coordinate-format three-way tensor, entries sorted by coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor3 {
    dims: [usize; 3],
    entries: Vec<([usize; 3], f64)>,
}

impl SparseTensor3 {
    pub fn new(dims: [usize; 3], mut entries: Vec<([usize; 3], f64)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(MterError::Validation(format!(
                    "duplicate coordinate {:?}",
                    w[0].0
                )));
            }
        }
        for &(idx, v) in &entries {
            if idx.iter().zip(&dims).any(|(i, d)| i >= d) {
                return Err(MterError::Validation(format!(
                    "coordinate {idx:?} outside {dims:?}"
                )));
            }
            if !(v >= 0.0 && v.is_finite()) {
                return Err(MterError::Validation(format!(
                    "value {v} at {idx:?} is not >= 0"
                )));
            }
        }
        Ok(Self { dims, entries })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn entries(&self) -> &[([usize; 3], f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, idx: [usize; 3]) -> Option<f64> {
        self.entries
            .binary_search_by(|e| e.0.cmp(&idx))
            .ok()
            .map(|pos| self.entries[pos].1)
    }

    /// Debug dump, one `i1 i2 i3 value` line per stored entry.
    pub fn dump(&self, mut w: impl Write) -> io::Result<()> {
        for (idx, v) in &self.entries {
            writeln!(w, "{} {} {} {}", idx[0], idx[1], idx[2], v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FeatureScore {
    /// Sum of mention polarities.
    pub sum: i32,
    /// Number of mentions.
    pub count: u32,
}

/// Per (user, item, feature) aggregated sentiment over all the user's reviews
/// of the item.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureScoreTable {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    scores: BTreeMap<(usize, usize, usize), FeatureScore>,
}

impl FeatureScoreTable {
    pub fn get(&self, user: usize, item: usize, feature: usize) -> Option<FeatureScore> {
        self.scores.get(&(user, item, feature)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize, usize), FeatureScore)> + '_ {
        self.scores.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

pub fn aggregate_feature_scores(train: &IndexedCorpus) -> FeatureScoreTable {
    let mut scores: BTreeMap<(usize, usize, usize), FeatureScore> = BTreeMap::new();
    for r in &train.reviews {
        for t in &r.tuples {
            let s = scores.entry((r.user, r.item, t.feature)).or_default();
            s.sum += t.polarity.value();
            s.count += 1;
        }
    }
    FeatureScoreTable {
        m: train.m(),
        n: train.n(),
        p: train.p(),
        scores,
    }
}

/// Overall ratings per (user, item). Repeated reviews of the same item keep the
/// maximum rating.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RatingTable {
    pub m: usize,
    pub n: usize,
    ratings: BTreeMap<(usize, usize), u32>,
}

impl RatingTable {
    pub fn from_corpus(corpus: &IndexedCorpus) -> Self {
        let mut ratings = BTreeMap::new();
        for r in &corpus.reviews {
            let e = ratings.entry((r.user, r.item)).or_insert(r.rating);
            *e = (*e).max(r.rating);
        }
        Self {
            m: corpus.m(),
            n: corpus.n(),
            ratings,
        }
    }

    pub fn get(&self, user: usize, item: usize) -> Option<u32> {
        self.ratings.get(&(user, item)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), u32)> + '_ {
        self.ratings.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }
}

/// Maps an aggregated feature score into `[1, N]`.
pub fn feature_value(score: f64, rating_max: u32) -> f64 {
    1.0 + (rating_max as f64 - 1.0) / (1.0 + (-score).exp())
}

/// Maps a phrase frequency (>= 1) into `[1, N]`.
pub fn phrase_value(frequency: f64, rating_max: u32) -> f64 {
    1.0 + (rating_max as f64 - 1.0) * (2.0 / (1.0 + (-frequency).exp()) - 1.0)
}

fn check_scale(rating_max: u32) -> Result<()> {
    if rating_max < 2 {
        return Err(MterError::Config(format!(
            "rating scale must be >= 2, got {rating_max}"
        )));
    }
    Ok(())
}

/// User × item × (features + 1) tensor; the last slice holds overall ratings.
pub fn build_x(
    scores: &FeatureScoreTable,
    ratings: &RatingTable,
    rating_max: u32,
) -> Result<SparseTensor3> {
    check_scale(rating_max)?;
    let p = scores.p;
    let mut entries: Vec<([usize; 3], f64)> = scores
        .iter()
        .map(|((i, j, k), s)| ([i, j, k], feature_value(s.sum as f64, rating_max)))
        .collect();
    entries.extend(ratings.iter().map(|((i, j), a)| ([i, j, p], a as f64)));
    SparseTensor3::new(
        [ratings.m.max(scores.m), ratings.n.max(scores.n), p + 1],
        entries,
    )
}

fn build_phrase_tensor(
    train: &IndexedCorpus,
    rating_max: u32,
    owner: impl Fn(&crate::corpus::IndexedReview) -> usize,
    owners: usize,
) -> Result<SparseTensor3> {
    check_scale(rating_max)?;
    let mut freq: BTreeMap<[usize; 3], u32> = BTreeMap::new();
    for r in &train.reviews {
        for t in r.tuples.iter().filter(|t| t.polarity.is_positive()) {
            *freq.entry([owner(r), t.feature, t.opinion]).or_insert(0) += 1;
        }
    }
    let entries = freq
        .into_iter()
        .map(|(idx, c)| (idx, phrase_value(c as f64, rating_max)))
        .collect();
    SparseTensor3::new([owners, train.p(), train.q()], entries)
}

/// User × feature × opinion tensor over positive phrases.
pub fn build_yu(train: &IndexedCorpus, rating_max: u32) -> Result<SparseTensor3> {
    build_phrase_tensor(train, rating_max, |r| r.user, train.m())
}

/// Item × feature × opinion tensor over positive phrases.
pub fn build_yi(train: &IndexedCorpus, rating_max: u32) -> Result<SparseTensor3> {
    build_phrase_tensor(train, rating_max, |r| r.item, train.n())
}

/// Per-user preference pairs. Rated-vs-rated pairs with a strictly higher
/// rating are materialized; rated-vs-unrated pairs are implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct PairOrderSet {
    n_items: usize,
    /// Per user: rated items as (item, rating), ascending by (rating, item).
    rated: Vec<Vec<(usize, u32)>>,
    pairs: Vec<Vec<(usize, usize)>>,
}

impl PairOrderSet {
    pub fn n_users(&self) -> usize {
        self.rated.len()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn rated(&self, user: usize) -> &[(usize, u32)] {
        &self.rated[user]
    }

    pub fn explicit_pairs(&self, user: usize) -> &[(usize, usize)] {
        &self.pairs[user]
    }

    pub fn rating(&self, user: usize, item: usize) -> Option<u32> {
        self.rated[user]
            .iter()
            .find(|&&(j, _)| j == item)
            .map(|&(_, r)| r)
    }

    /// Whether `(j, l)` belongs to the user's preference set, explicit or implicit.
    pub fn contains(&self, user: usize, j: usize, l: usize) -> bool {
        match (self.rating(user, j), self.rating(user, l)) {
            (Some(rj), Some(rl)) => rj > rl,
            (Some(_), None) => l < self.n_items,
            _ => false,
        }
    }

    /// Number of rated items strictly below `rating` for the user; those are
    /// the first entries of [`PairOrderSet::rated`].
    pub fn count_below(&self, user: usize, rating: u32) -> usize {
        self.rated[user].partition_point(|&(_, r)| r < rating)
    }
}

pub fn build_pair_sets(ratings: &RatingTable) -> PairOrderSet {
    let mut rated: Vec<Vec<(usize, u32)>> = vec![Vec::new(); ratings.m];
    for ((i, j), a) in ratings.iter() {
        rated[i].push((j, a));
    }
    for r in &mut rated {
        r.sort_by_key(|&(j, a)| (a, j));
    }
    let pairs = rated
        .iter()
        .map(|items| {
            let mut out = Vec::new();
            for &(j, rj) in items {
                for &(l, rl) in items {
                    if rj > rl {
                        out.push((j, l));
                    }
                }
            }
            out
        })
        .collect();
    PairOrderSet {
        n_items: ratings.n,
        rated,
        pairs,
    }
}

/// Everything the trainer needs from a training split.
#[derive(Debug, Clone)]
pub struct TrainingTensors {
    pub x: SparseTensor3,
    pub yu: SparseTensor3,
    pub yi: SparseTensor3,
    pub ratings: RatingTable,
    pub pairs: PairOrderSet,
}

impl TrainingTensors {
    pub fn from_corpus(train: &IndexedCorpus) -> Result<Self> {
        let n = train.rating_max;
        let ratings = RatingTable::from_corpus(train);
        let scores = aggregate_feature_scores(train);
        Ok(Self {
            x: build_x(&scores, &ratings, n)?,
            yu: build_yu(train, n)?,
            yi: build_yi(train, n)?,
            pairs: build_pair_sets(&ratings),
            ratings,
        })
    }
}
