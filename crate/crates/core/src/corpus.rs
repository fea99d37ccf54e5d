//! Review corpus: sentiment lexicon, review records, recursive support
//! filtering, dense re-indexing and per-user train/validation/test splits.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MterError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn from_i64(v: i64) -> Option<Self> {
        match v {
            1 => Some(Polarity::Positive),
            -1 => Some(Polarity::Negative),
            _ => None,
        }
    }

    pub fn value(self) -> i32 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Polarity::Positive
    }
}

impl Serialize for Polarity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i32(self.value())
    }
}

impl<'de> Deserialize<'de> for Polarity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Polarity::from_i64(v)
            .ok_or_else(|| serde::de::Error::custom(format!("polarity must be 1 or -1, got {v}")))
    }
}

/// One (feature, opinion, polarity) triple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub feature: String,
    pub opinion: String,
    pub polarity: Polarity,
}

impl LexiconEntry {
    pub fn new(feature: impl Into<String>, opinion: impl Into<String>, polarity: Polarity) -> Self {
        Self {
            feature: feature.into(),
            opinion: opinion.into(),
            polarity,
        }
    }
}

impl fmt::Display for LexiconEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {:+})",
            self.feature,
            self.opinion,
            self.polarity.value()
        )
    }
}

/// Deduplicated lexicon in first-seen order.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
    known: HashSet<LexiconEntry>,
}

impl Lexicon {
    pub fn from_entries(entries: impl IntoIterator<Item = LexiconEntry>) -> Self {
        let mut lex = Lexicon::default();
        for e in entries {
            lex.insert(e);
        }
        lex
    }

    fn insert(&mut self, e: LexiconEntry) {
        if self.known.insert(e.clone()) {
            self.entries.push(e);
        }
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, e: &LexiconEntry) -> bool {
        self.known.contains(e)
    }

    /// Parses TSV text: `feature<TAB>opinion<TAB>polarity`, `#` comments and
    /// blank lines skipped.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut lex = Lexicon::default();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let trimmed = line.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let err = |message: String| MterError::Parse {
                path: origin.to_path_buf(),
                line: line_no,
                message,
            };
            let cols: Vec<&str> = trimmed.split('\t').collect();
            if cols.len() != 3 {
                return Err(err(format!(
                    "expected 3 tab-separated columns, got {}",
                    cols.len()
                )));
            }
            let (feature, opinion) = (cols[0].trim(), cols[1].trim());
            if feature.is_empty() || opinion.is_empty() {
                return Err(err("empty feature or opinion".into()));
            }
            let polarity = cols[2]
                .trim()
                .parse::<i64>()
                .ok()
                .and_then(Polarity::from_i64)
                .ok_or_else(|| err(format!("polarity must be 1 or -1, got {:?}", cols[2])))?;
            lex.insert(LexiconEntry::new(feature, opinion, polarity));
        }
        Ok(lex)
    }

    pub fn to_tsv(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\t{}\n", e.feature, e.opinion, e.polarity.value()))
            .collect()
    }
}

pub fn write_lexicon(path: impl AsRef<Path>, lexicon: &Lexicon) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, lexicon.to_tsv()).map_err(|e| MterError::io(path, e))
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| MterError::io(path, e))?;
    Lexicon::parse(&text, path)
}

/// One review with its extracted tuples, multiplicity preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub user: String,
    pub item: String,
    pub rating: u32,
    #[serde(rename = "phrases")]
    pub tuples: Vec<LexiconEntry>,
}

#[derive(Deserialize)]
struct RawReview {
    user: String,
    item: String,
    rating: f64,
    #[serde(default)]
    phrases: Vec<LexiconEntry>,
}

/// Parses JSON-lines review text and validates every record.
pub fn parse_reviews(
    text: &str,
    origin: &Path,
    lexicon: &Lexicon,
    rating_max: u32,
) -> Result<Vec<ReviewRecord>> {
    if rating_max < 2 {
        return Err(MterError::Config(format!(
            "rating scale must be >= 2, got {rating_max}"
        )));
    }
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawReview = serde_json::from_str(line).map_err(|e| MterError::Parse {
            path: origin.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if raw.rating.fract() != 0.0 || raw.rating < 1.0 || raw.rating > rating_max as f64 {
            return Err(MterError::Validation(format!(
                "{}:{line_no}: rating {} outside [1, {rating_max}]",
                origin.display(),
                raw.rating
            )));
        }
        if let Some(t) = raw.phrases.iter().find(|t| !lexicon.contains(t)) {
            return Err(MterError::Validation(format!(
                "{}:{line_no}: tuple {t} not in lexicon",
                origin.display()
            )));
        }
        out.push(ReviewRecord {
            user: raw.user,
            item: raw.item,
            rating: raw.rating as u32,
            tuples: raw.phrases,
        });
    }
    Ok(out)
}

pub fn load_reviews(
    path: impl AsRef<Path>,
    lexicon: &Lexicon,
    rating_max: u32,
) -> Result<Vec<ReviewRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| MterError::io(path, e))?;
    parse_reviews(&text, path, lexicon, rating_max)
}

pub fn write_reviews(path: impl AsRef<Path>, reviews: &[ReviewRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for r in reviews {
        serde_json::to_writer(&mut buf, r).expect("review records always serialize");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| MterError::io(path, e))?;
    f.write_all(&buf).map_err(|e| MterError::io(path, e))
}

/// Bijection between external names and dense indices `0..len`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct IdMap {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

impl From<Vec<String>> for IdMap {
    fn from(names: Vec<String>) -> Self {
        let mut m = IdMap::default();
        for n in &names {
            m.intern(n);
        }
        m
    }
}

impl From<IdMap> for Vec<String> {
    fn from(m: IdMap) -> Self {
        m.names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IndexedTuple {
    pub feature: usize,
    pub opinion: usize,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedReview {
    pub user: usize,
    pub item: usize,
    pub rating: u32,
    pub tuples: Vec<IndexedTuple>,
}

/// Reviews over dense entity indices. Train/validation/test splits share the
/// id maps of the corpus they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexedCorpus {
    pub users: IdMap,
    pub items: IdMap,
    pub features: IdMap,
    pub opinions: IdMap,
    pub reviews: Vec<IndexedReview>,
    pub rating_max: u32,
}

impl IndexedCorpus {
    /// Indexes records in first-appearance order, no filtering.
    pub fn from_records(records: &[ReviewRecord], rating_max: u32) -> Self {
        let mut corpus = IndexedCorpus {
            users: IdMap::default(),
            items: IdMap::default(),
            features: IdMap::default(),
            opinions: IdMap::default(),
            reviews: Vec::with_capacity(records.len()),
            rating_max,
        };
        for r in records {
            let user = corpus.users.intern(&r.user);
            let item = corpus.items.intern(&r.item);
            let tuples = r
                .tuples
                .iter()
                .map(|t| IndexedTuple {
                    feature: corpus.features.intern(&t.feature),
                    opinion: corpus.opinions.intern(&t.opinion),
                    polarity: t.polarity,
                })
                .collect();
            corpus.reviews.push(IndexedReview {
                user,
                item,
                rating: r.rating,
                tuples,
            });
        }
        corpus
    }

    /// Number of users.
    pub fn m(&self) -> usize {
        self.users.len()
    }

    /// Number of items.
    pub fn n(&self) -> usize {
        self.items.len()
    }

    /// Number of features (excluding the dummy overall-rating feature).
    pub fn p(&self) -> usize {
        self.features.len()
    }

    /// Number of opinion phrases.
    pub fn q(&self) -> usize {
        self.opinions.len()
    }

    /// Same id maps, different review subset.
    pub fn with_reviews(&self, reviews: Vec<IndexedReview>) -> Self {
        IndexedCorpus {
            users: self.users.clone(),
            items: self.items.clone(),
            features: self.features.clone(),
            opinions: self.opinions.clone(),
            reviews,
            rating_max: self.rating_max,
        }
    }

    /// Indexes `records` against these id maps without adding entities.
    pub fn index_records(&self, records: &[ReviewRecord]) -> Result<Self> {
        fn lookup(map: &IdMap, what: &str, name: &str) -> Result<usize> {
            map.get(name)
                .ok_or_else(|| MterError::Validation(format!("unknown {what} {name:?}")))
        }
        let reviews = records
            .iter()
            .map(|r| {
                let tuples = r
                    .tuples
                    .iter()
                    .map(|t| {
                        Ok(IndexedTuple {
                            feature: lookup(&self.features, "feature", &t.feature)?,
                            opinion: lookup(&self.opinions, "opinion", &t.opinion)?,
                            polarity: t.polarity,
                        })
                    })
                    .collect::<Result<_>>()?;
                Ok(IndexedReview {
                    user: lookup(&self.users, "user", &r.user)?,
                    item: lookup(&self.items, "item", &r.item)?,
                    rating: r.rating,
                    tuples,
                })
            })
            .collect::<Result<_>>()?;
        Ok(self.with_reviews(reviews))
    }

    pub fn to_records(&self) -> Vec<ReviewRecord> {
        self.reviews
            .iter()
            .map(|r| ReviewRecord {
                user: self.users.names[r.user].clone(),
                item: self.items.names[r.item].clone(),
                rating: r.rating,
                tuples: r
                    .tuples
                    .iter()
                    .map(|t| {
                        LexiconEntry::new(
                            self.features.names[t.feature].clone(),
                            self.opinions.names[t.opinion].clone(),
                            t.polarity,
                        )
                    })
                    .collect(),
            })
            .collect()
    }

    /// Training items per user, sorted and deduplicated.
    pub fn items_by_user(&self) -> Vec<Vec<usize>> {
        let mut by_user = vec![Vec::new(); self.m()];
        for r in &self.reviews {
            by_user[r.user].push(r.item);
        }
        for items in &mut by_user {
            items.sort_unstable();
            items.dedup();
        }
        by_user
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterThresholds {
    /// Minimum number of reviews mentioning a feature.
    pub min_feature_support: usize,
    /// Minimum number of surviving tuples in a review.
    pub min_review_tuples: usize,
    pub min_user_reviews: usize,
    pub min_item_reviews: usize,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self {
            min_feature_support: 2,
            min_review_tuples: 1,
            min_user_reviews: 2,
            min_item_reviews: 2,
        }
    }
}

fn count_by<'a>(keys: impl Iterator<Item = &'a str>) -> HashMap<&'a str, usize> {
    let mut counts = HashMap::new();
    for k in keys {
        *counts.entry(k).or_insert(0) += 1;
    }
    counts
}

/// Applies the feature, review and user/item filters in turn until nothing
/// changes, then re-indexes the survivors densely in input order.
pub fn recursive_filter(
    reviews: &[ReviewRecord],
    thresholds: &FilterThresholds,
    rating_max: u32,
) -> Result<IndexedCorpus> {
    let mut alive: Vec<ReviewRecord> = reviews.to_vec();
    loop {
        let before = (
            alive.len(),
            alive.iter().map(|r| r.tuples.len()).sum::<usize>(),
        );

        let support = count_by(alive.iter().flat_map(|r| {
            let distinct: HashSet<&str> = r.tuples.iter().map(|t| t.feature.as_str()).collect();
            distinct.into_iter()
        }));
        let weak: HashSet<String> = support
            .into_iter()
            .filter(|&(_, c)| c < thresholds.min_feature_support)
            .map(|(f, _)| f.to_owned())
            .collect();
        for r in &mut alive {
            r.tuples.retain(|t| !weak.contains(&t.feature));
        }

        alive.retain(|r| r.tuples.len() >= thresholds.min_review_tuples);

        let per_user = count_by(alive.iter().map(|r| r.user.as_str()));
        let per_item = count_by(alive.iter().map(|r| r.item.as_str()));
        let keep: Vec<bool> = alive
            .iter()
            .map(|r| {
                per_user[r.user.as_str()] >= thresholds.min_user_reviews
                    && per_item[r.item.as_str()] >= thresholds.min_item_reviews
            })
            .collect();
        let mut keep = keep.into_iter();
        alive.retain(|_| keep.next().unwrap_or(false));

        let after = (
            alive.len(),
            alive.iter().map(|r| r.tuples.len()).sum::<usize>(),
        );
        if after == before {
            break;
        }
    }
    if alive.is_empty() {
        return Err(MterError::EmptyCorpus);
    }
    Ok(IndexedCorpus::from_records(&alive, rating_max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(MterError::Config(format!(
                "split ratios must be positive: {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MterError::Config(format!(
                "split ratios sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `count` reviews; ties between equal
    /// remainders are broken by `rng`. Train always gets at least one review
    /// when `count >= 1`.
    fn apportion(&self, count: usize, rng: &mut impl Rng) -> [usize; 3] {
        let quotas = [self.train, self.valid, self.test].map(|r| r * count as f64 + 1e-9);
        let mut sizes = quotas.map(|q| q.floor() as usize);
        let assigned: usize = sizes.iter().sum();
        let mut order: Vec<(f64, f64, usize)> = (0..3)
            .map(|k| (quotas[k] - quotas[k].floor(), rng.random::<f64>(), k))
            .collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
        for &(_, _, k) in order.iter().take(count.saturating_sub(assigned)) {
            sizes[k] += 1;
        }
        if count > 0 && sizes[0] == 0 {
            let donor = if sizes[2] >= sizes[1] { 2 } else { 1 };
            sizes[donor] -= 1;
            sizes[0] += 1;
        }
        sizes
    }
}

/// Per-user stratified random split into (train, valid, test).
pub fn split_corpus(
    corpus: &IndexedCorpus,
    ratios: SplitRatios,
    seed: u64,
) -> Result<(IndexedCorpus, IndexedCorpus, IndexedCorpus)> {
    ratios.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_user: Vec<Vec<usize>> = vec![Vec::new(); corpus.m()];
    for (idx, r) in corpus.reviews.iter().enumerate() {
        by_user[r.user].push(idx);
    }
    let mut part = vec![0u8; corpus.reviews.len()];
    for reviews in &mut by_user {
        reviews.shuffle(&mut rng);
        let [n_train, n_valid, _] = ratios.apportion(reviews.len(), &mut rng);
        for (pos, &idx) in reviews.iter().enumerate() {
            part[idx] = if pos < n_train {
                0
            } else if pos < n_train + n_valid {
                1
            } else {
                2
            };
        }
    }
    let pick = |which: u8| {
        corpus
            .reviews
            .iter()
            .zip(&part)
            .filter(|(_, &p)| p == which)
            .map(|(r, _)| r.clone())
            .collect::<Vec<_>>()
    };
    Ok((
        corpus.with_reviews(pick(0)),
        corpus.with_reviews(pick(1)),
        corpus.with_reviews(pick(2)),
    ))
}
