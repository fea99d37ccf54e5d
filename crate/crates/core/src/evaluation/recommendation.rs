use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ndcg::{ndcg_at_k_with, GainKind};
use crate::corpus::IndexedCorpus;
use crate::error::{MterError, Result};
use crate::factorization::FactorModel;
use crate::ranking::rank_candidates;
use crate::tensors::PairOrderSet;

/// Anything that scores every item for a user.
pub trait Scorer {
    fn scores(&self, user: usize) -> Result<Vec<f64>>;
}

impl Scorer for FactorModel {
    fn scores(&self, user: usize) -> Result<Vec<f64>> {
        self.overall_scores(user)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserNdcg {
    pub user: usize,
    /// One value per entry of [`RecommendationEval::ks`].
    pub ndcg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationEval {
    pub ks: Vec<usize>,
    /// Macro-averaged NDCG per K.
    pub ndcg: Vec<f64>,
    pub users: usize,
    pub per_user: Vec<UserNdcg>,
}

impl RecommendationEval {
    pub fn at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.ndcg[i])
    }

    /// Per-user values at `k`, in user order.
    pub fn user_values(&self, k: usize) -> Option<Vec<f64>> {
        let pos = self.ks.iter().position(|&x| x == k)?;
        Some(self.per_user.iter().map(|u| u.ndcg[pos]).collect())
    }
}

/// For every user with at least one test item outside their training items,
/// ranks all non-training items and scores NDCG@K against the test ratings
/// (repeated test reviews of an item keep the maximum rating).
pub fn eval_recommendation(
    scorer: &dyn Scorer,
    train: &IndexedCorpus,
    test: &IndexedCorpus,
    ks: &[usize],
    gain: GainKind,
) -> Result<RecommendationEval> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(MterError::Config(format!("K values must be >= 1: {ks:?}")));
    }
    let train_items = train.items_by_user();
    let mut gains: Vec<HashMap<usize, f64>> = vec![HashMap::new(); test.m()];
    for r in &test.reviews {
        if train_items
            .get(r.user)
            .is_some_and(|t| t.binary_search(&r.item).is_ok())
        {
            continue;
        }
        let g = gains[r.user].entry(r.item).or_insert(0.0);
        *g = g.max(r.rating as f64);
    }
    let k_max = *ks.iter().max().expect("non-empty");
    let mut per_user = Vec::new();
    for (user, user_gains) in gains.iter().enumerate() {
        if user_gains.is_empty() {
            continue;
        }
        let excluded = train_items.get(user).map_or(&[][..], Vec::as_slice);
        let ranked: Vec<usize> = rank_candidates(scorer.scores(user)?, excluded, k_max)
            .into_iter()
            .map(|(j, _)| j)
            .collect();
        per_user.push(UserNdcg {
            user,
            ndcg: ks
                .iter()
                .map(|&k| ndcg_at_k_with(&ranked, user_gains, k, gain))
                .collect(),
        });
    }
    if per_user.is_empty() {
        return Err(MterError::NoEvaluableUsers);
    }
    let ndcg = (0..ks.len())
        .map(|pos| per_user.iter().map(|u| u.ndcg[pos]).sum::<f64>() / per_user.len() as f64)
        .collect();
    Ok(RecommendationEval {
        ks: ks.to_vec(),
        ndcg,
        users: per_user.len(),
        per_user,
    })
}

/// Share of preference pairs `(user, j, l)` in `pairs` with `score_j > score_l`.
/// Covers rated-over-lower-rated and rated-over-unrated pairs.
pub fn pair_satisfaction(scorer: &dyn Scorer, pairs: &PairOrderSet) -> Result<f64> {
    let (mut hit, mut total) = (0u64, 0u64);
    for i in 0..pairs.n_users() {
        let rated = pairs.rated(i);
        if rated.is_empty() {
            continue;
        }
        let s = scorer.scores(i)?;
        let mut rated_items: Vec<usize> = rated.iter().map(|&(j, _)| j).collect();
        rated_items.sort_unstable();
        for &(j, l) in pairs.explicit_pairs(i) {
            total += 1;
            hit += u64::from(s[j] > s[l]);
        }
        for l in (0..s.len()).filter(|l| rated_items.binary_search(l).is_err()) {
            for &(j, _) in rated {
                total += 1;
                hit += u64::from(s[j] > s[l]);
            }
        }
    }
    if total == 0 {
        return Err(MterError::Validation("no preference pairs".into()));
    }
    Ok(hit as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ReviewRecord;
    use crate::evaluation::ndcg_at_k;
    use crate::factorization::{init_model, Dims};

    struct Fixed(Vec<Vec<f64>>);

    impl Scorer for Fixed {
        fn scores(&self, user: usize) -> Result<Vec<f64>> {
            Ok(self.0[user].clone())
        }
    }

    fn split(
        train: &[(&str, &str, u32)],
        test: &[(&str, &str, u32)],
        users: &[&str],
        items: &[&str],
    ) -> (IndexedCorpus, IndexedCorpus) {
        // seed id order explicitly
        let mut all: Vec<ReviewRecord> = users
            .iter()
            .zip(items.iter().cycle())
            .map(|(u, i)| ReviewRecord {
                user: u.to_string(),
                item: i.to_string(),
                rating: 1,
                tuples: vec![],
            })
            .collect();
        all.extend(items.iter().map(|i| ReviewRecord {
            user: users[0].to_string(),
            item: i.to_string(),
            rating: 1,
            tuples: vec![],
        }));
        let base = IndexedCorpus::from_records(&all, 5);
        let conv = |rows: &[(&str, &str, u32)]| {
            base.with_reviews(
                rows.iter()
                    .map(|(u, i, r)| crate::corpus::IndexedReview {
                        user: base.users.get(u).unwrap(),
                        item: base.items.get(i).unwrap(),
                        rating: *r,
                        tuples: vec![],
                    })
                    .collect(),
            )
        };
        (conv(train), conv(test))
    }

    #[test]
    fn perfect_scorer_gets_one() {
        let (tr, te) = split(
            &[("a", "x", 5), ("b", "y", 4)],
            &[("a", "y", 3), ("a", "z", 5), ("b", "x", 2)],
            &["a", "b"],
            &["x", "y", "z"],
        );
        // items x=0, y=1, z=2
        let s = Fixed(vec![vec![9.0, 1.0, 2.0], vec![1.0, 0.0, 0.0]]);
        let r = eval_recommendation(&s, &tr, &te, &[1, 2, 10], GainKind::Exponential).unwrap();
        assert_eq!(r.users, 2);
        assert!(
            r.ndcg.iter().all(|&v| (v - 1.0).abs() < 1e-15),
            "{:?}",
            r.ndcg
        );
    }

    #[test]
    fn macro_average_over_users() {
        let (tr, te) = split(
            &[("a", "x", 5), ("b", "x", 4)],
            &[("a", "y", 3), ("b", "z", 5)],
            &["a", "b"],
            &["x", "y", "z"],
        );
        // user a ranks y first (1.0), user b ranks z last among two candidates at K=1 (0.0)
        let s = Fixed(vec![vec![0.0, 2.0, 1.0], vec![0.0, 2.0, 1.0]]);
        let r = eval_recommendation(&s, &tr, &te, &[1], GainKind::Exponential).unwrap();
        assert_eq!(r.per_user[0].ndcg, vec![1.0]);
        assert_eq!(r.per_user[1].ndcg, vec![0.0]);
        assert_eq!(r.at(1), Some(0.5));
    }

    #[test]
    fn no_test_users_is_an_error() {
        let (tr, te) = split(&[("a", "x", 5)], &[("a", "x", 3)], &["a"], &["x", "y"]);
        let s = Fixed(vec![vec![0.0, 0.0]]);
        assert!(matches!(
            eval_recommendation(&s, &tr, &te, &[10], GainKind::Exponential),
            Err(MterError::NoEvaluableUsers)
        ));
    }

    #[test]
    fn model_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let users: Vec<String> = (0..6).map(|u| format!("u{u}")).collect();
        let items: Vec<String> = (0..15).map(|i| format!("i{i}")).collect();
        let mut rows_tr = Vec::new();
        let mut rows_te = Vec::new();
        for u in &users {
            for i in &items {
                let roll: f64 = rng.random();
                let r = rng.random_range(1..=5u32);
                if roll < 0.2 {
                    rows_tr.push((u.as_str(), i.as_str(), r));
                } else if roll < 0.35 {
                    rows_te.push((u.as_str(), i.as_str(), r));
                }
            }
        }
        let ur: Vec<&str> = users.iter().map(String::as_str).collect();
        let ir: Vec<&str> = items.iter().map(String::as_str).collect();
        let (tr, te) = split(&rows_tr, &rows_te, &ur, &ir);
        let model = init_model(Dims::new(3, 3, 2, 2), 6, 15, 2, 2, 4, 1.0).unwrap();
        let got =
            eval_recommendation(&model, &tr, &te, &[3, 5, 10], GainKind::Exponential).unwrap();

        // brute force: score every item with pointwise predictions, sort, drop train items
        let mut sum = [0.0; 3];
        let mut count = 0;
        for u in 0..6 {
            let mut gains = HashMap::new();
            let train_set: Vec<usize> = tr
                .reviews
                .iter()
                .filter(|r| r.user == u)
                .map(|r| r.item)
                .collect();
            for r in te
                .reviews
                .iter()
                .filter(|r| r.user == u && !train_set.contains(&r.item))
            {
                gains.insert(r.item, r.rating as f64);
            }
            if gains.is_empty() {
                continue;
            }
            let mut cand: Vec<(usize, f64)> = (0..15)
                .filter(|j| !train_set.contains(j))
                .map(|j| (j, model.predict_overall(u, j).unwrap()))
                .collect();
            cand.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let ranked: Vec<usize> = cand.iter().map(|c| c.0).collect();
            for (pos, k) in [3, 5, 10].iter().enumerate() {
                sum[pos] += ndcg_at_k(&ranked, &gains, *k);
            }
            count += 1;
        }
        assert_eq!(count, got.users);
        for pos in 0..3 {
            assert!((sum[pos] / count as f64 - got.ndcg[pos]).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_satisfaction_counts_both_pair_kinds() {
        // u0 rated item0:5, item1:3; items 2 and 3 unrated -> 1 + 2*2 pairs
        let recs: Vec<ReviewRecord> = [
            ("u0", "a", 5),
            ("u0", "b", 3),
            ("u1", "c", 4),
            ("u1", "d", 4),
        ]
        .iter()
        .map(|(u, i, r)| ReviewRecord {
            user: u.to_string(),
            item: i.to_string(),
            rating: *r,
            tuples: vec![],
        })
        .collect();
        let c = IndexedCorpus::from_records(&recs, 5);
        let pairs = crate::tensors::build_pair_sets(&crate::tensors::RatingTable::from_corpus(&c));
        // u0: a>b ok, a>c ok, a>d no, b>c no, b>d no -> 2/5
        let s = Fixed(vec![vec![3.0, 2.0, 2.5, 4.0], vec![0.0, 1.0, 2.0, 0.5]]);
        // u1: c(2.0) > a(0.0) ok, c > b(1.0) ok, d(0.5) > a ok, d > b no -> 3/4
        let r = pair_satisfaction(&s, &pairs).unwrap();
        assert!((r - 5.0 / 9.0).abs() < 1e-15);
    }
}
