use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::ndcg::ndcg_at_k;
use crate::corpus::IndexedCorpus;
use crate::error::Result;
use crate::factorization::FactorModel;
use crate::ranking::rank_candidates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentKs {
    pub feature_k: usize,
    pub opinion_k: usize,
}

impl Default for ContentKs {
    fn default() -> Self {
        Self {
            feature_k: 20,
            opinion_k: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentEval {
    pub feature_k: usize,
    pub feature_ndcg: f64,
    /// (user, item) pairs that mention at least one feature.
    pub feature_cases: usize,
    pub opinion_k: usize,
    pub opinion_ndcg: f64,
    /// (user, item, feature) triples with at least one positive phrase.
    pub opinion_cases: usize,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Ranks all features for every tested (user, item) against the features
/// the review mentions, and all phrases for every mentioned feature against
/// the positive phrases used for it. Binary gains, macro-averaged.
pub fn eval_content_prediction(
    model: &FactorModel,
    test: &IndexedCorpus,
    ks: ContentKs,
) -> Result<ContentEval> {
    // (user, item) -> feature -> positive phrases
    let mut cases: BTreeMap<(usize, usize), BTreeMap<usize, BTreeSet<usize>>> = BTreeMap::new();
    for r in &test.reviews {
        if r.tuples.is_empty() {
            continue;
        }
        let features = cases.entry((r.user, r.item)).or_default();
        for t in &r.tuples {
            let phrases = features.entry(t.feature).or_default();
            if t.polarity.is_positive() {
                phrases.insert(t.opinion);
            }
        }
    }

    let mut feature_values = Vec::with_capacity(cases.len());
    let mut opinion_values = Vec::new();
    for (&(user, item), features) in &cases {
        let ranked: Vec<usize> =
            rank_candidates(model.feature_scores(user, item)?, &[], ks.feature_k)
                .into_iter()
                .map(|(k, _)| k)
                .collect();
        let gains: HashMap<usize, f64> = features.keys().map(|&k| (k, 1.0)).collect();
        feature_values.push(ndcg_at_k(&ranked, &gains, ks.feature_k));

        for (&feature, phrases) in features {
            if phrases.is_empty() {
                continue;
            }
            let ranked: Vec<usize> = rank_candidates(
                model.opinion_scores(user, item, feature)?,
                &[],
                ks.opinion_k,
            )
            .into_iter()
            .map(|(w, _)| w)
            .collect();
            let gains: HashMap<usize, f64> = phrases.iter().map(|&w| (w, 1.0)).collect();
            opinion_values.push(ndcg_at_k(&ranked, &gains, ks.opinion_k));
        }
    }
    Ok(ContentEval {
        feature_k: ks.feature_k,
        feature_ndcg: mean(&feature_values),
        feature_cases: feature_values.len(),
        opinion_k: ks.opinion_k,
        opinion_ndcg: mean(&opinion_values),
        opinion_cases: opinion_values.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{IndexedReview, IndexedTuple, Polarity};
    use crate::factorization::{init_model, Dims};

    fn corpus(
        reviews: Vec<IndexedReview>,
        m: usize,
        n: usize,
        p: usize,
        q: usize,
    ) -> IndexedCorpus {
        let names = |prefix: &str, k: usize| {
            (0..k)
                .map(|i| format!("{prefix}{i}"))
                .collect::<Vec<_>>()
                .into()
        };
        IndexedCorpus {
            users: names("u", m),
            items: names("i", n),
            features: names("f", p),
            opinions: names("o", q),
            reviews,
            rating_max: 5,
        }
    }

    fn t(feature: usize, opinion: usize, positive: bool) -> IndexedTuple {
        IndexedTuple {
            feature,
            opinion,
            polarity: if positive {
                Polarity::Positive
            } else {
                Polarity::Negative
            },
        }
    }

    #[test]
    fn top_feature_mentioned_scores_one() {
        let model = init_model(Dims::new(2, 2, 2, 2), 2, 2, 4, 3, 1, 1.0).unwrap();
        let top = rank_candidates(model.feature_scores(1, 0).unwrap(), &[], 1)[0].0;
        let c = corpus(
            vec![IndexedReview {
                user: 1,
                item: 0,
                rating: 4,
                tuples: vec![t(top, 0, false)],
            }],
            2,
            2,
            4,
            3,
        );
        let e = eval_content_prediction(&model, &c, ContentKs::default()).unwrap();
        assert_eq!(e.feature_ndcg, 1.0);
        assert_eq!(e.feature_cases, 1);
        // only a negative phrase: skipped for the opinion metric
        assert_eq!(e.opinion_cases, 0);
        assert_eq!(e.opinion_ndcg, 0.0);
    }

    #[test]
    fn matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let (m, n, p, q) = (4, 5, 6, 9);
        let model = init_model(Dims::new(3, 2, 3, 2), m, n, p, q, 17, 1.0).unwrap();
        let reviews: Vec<IndexedReview> = (0..12)
            .map(|_| IndexedReview {
                user: rng.random_range(0..m),
                item: rng.random_range(0..n),
                rating: 3,
                tuples: (0..rng.random_range(0..5))
                    .map(|_| {
                        t(
                            rng.random_range(0..p),
                            rng.random_range(0..q),
                            rng.random_bool(0.7),
                        )
                    })
                    .collect(),
            })
            .collect();
        let c = corpus(reviews.clone(), m, n, p, q);
        let ks = ContentKs {
            feature_k: 3,
            opinion_k: 4,
        };
        let got = eval_content_prediction(&model, &c, ks).unwrap();

        let mut fvals = Vec::new();
        let mut ovals = Vec::new();
        let mut pairs: Vec<(usize, usize)> = reviews
            .iter()
            .filter(|r| !r.tuples.is_empty())
            .map(|r| (r.user, r.item))
            .collect();
        pairs.sort();
        pairs.dedup();
        for (u, i) in pairs {
            let tuples: Vec<IndexedTuple> = reviews
                .iter()
                .filter(|r| r.user == u && r.item == i)
                .flat_map(|r| r.tuples.clone())
                .collect();
            let mut fs: Vec<(usize, f64)> = (0..p)
                .map(|k| (k, model.predict_x(u, i, k).unwrap()))
                .collect();
            fs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let ranked: Vec<usize> = fs.iter().map(|x| x.0).collect();
            let gains: HashMap<usize, f64> = tuples.iter().map(|t| (t.feature, 1.0)).collect();
            fvals.push(ndcg_at_k(&ranked, &gains, 3));
            let mut feats: Vec<usize> = gains.keys().copied().collect();
            feats.sort();
            for k in feats {
                let pos: HashMap<usize, f64> = tuples
                    .iter()
                    .filter(|t| t.feature == k && t.polarity.is_positive())
                    .map(|t| (t.opinion, 1.0))
                    .collect();
                if pos.is_empty() {
                    continue;
                }
                let mut os: Vec<(usize, f64)> = (0..q)
                    .map(|w| (w, model.opinion_score(u, i, k, w).unwrap()))
                    .collect();
                os.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
                let ranked: Vec<usize> = os.iter().map(|x| x.0).collect();
                ovals.push(ndcg_at_k(&ranked, &pos, 4));
            }
        }
        assert_eq!(got.feature_cases, fvals.len());
        assert_eq!(got.opinion_cases, ovals.len());
        assert!((got.feature_ndcg - mean(&fvals)).abs() < 1e-12);
        assert!((got.opinion_ndcg - mean(&ovals)).abs() < 1e-12);
    }
}
