use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{IndexedCorpus, Polarity};
use crate::error::{MterError, Result};

/// Whose phrase reuse is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PermutationScope {
    User,
    Item,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationReport {
    pub scope: PermutationScope,
    pub observed: f64,
    pub permuted: Vec<f64>,
    pub permuted_mean: f64,
    /// Fraction of permuted statistics >= observed.
    pub p_value: f64,
}

/// Mentions grouped by feature, each as (entity, phrase).
struct Mentions {
    by_feature: Vec<Vec<(usize, usize)>>,
}

impl Mentions {
    fn new(corpus: &IndexedCorpus, scope: PermutationScope) -> Self {
        let mut by_feature = vec![Vec::new(); corpus.p()];
        for r in &corpus.reviews {
            let entity = match scope {
                PermutationScope::User => r.user,
                PermutationScope::Item => r.item,
            };
            for t in &r.tuples {
                by_feature[t.feature].push((entity, t.opinion));
            }
        }
        Self { by_feature }
    }

    fn statistic(&self) -> f64 {
        let mut total = 0.0;
        let mut groups = 0usize;
        let mut per_entity: HashMap<usize, HashMap<usize, usize>> = HashMap::new();
        for mentions in &self.by_feature {
            per_entity.clear();
            for &(entity, phrase) in mentions {
                *per_entity
                    .entry(entity)
                    .or_default()
                    .entry(phrase)
                    .or_default() += 1;
            }
            for phrases in per_entity.values() {
                let count: usize = phrases.values().sum();
                if count < 2 {
                    continue;
                }
                let modal = *phrases.values().max().expect("non-empty");
                total += modal as f64 / count as f64;
                groups += 1;
            }
        }
        if groups == 0 {
            0.0
        } else {
            total / groups as f64
        }
    }

    fn shuffle(&mut self, rng: &mut ChaCha8Rng) {
        for mentions in &mut self.by_feature {
            let mut phrases: Vec<usize> = mentions.iter().map(|m| m.1).collect();
            phrases.shuffle(rng);
            for (m, w) in mentions.iter_mut().zip(phrases) {
                m.1 = w;
            }
        }
    }
}

/// Mean over (entity, feature) groups with at least two mentions of the share
/// of mentions that use the group's most frequent phrase.
pub fn reuse_statistic(corpus: &IndexedCorpus, scope: PermutationScope) -> f64 {
    Mentions::new(corpus, scope).statistic()
}

/// Reassigns phrases (with their polarity) uniformly at random among all
/// mentions of the same feature, keeping every feature's phrase multiset.
pub fn permute_corpus(corpus: &IndexedCorpus, rng: &mut ChaCha8Rng) -> IndexedCorpus {
    let mut slots: Vec<Vec<(usize, usize)>> = vec![Vec::new(); corpus.p()];
    for (ri, r) in corpus.reviews.iter().enumerate() {
        for (ti, t) in r.tuples.iter().enumerate() {
            slots[t.feature].push((ri, ti));
        }
    }
    let mut out = corpus.clone();
    for feature_slots in &slots {
        let mut phrases: Vec<(usize, Polarity)> = feature_slots
            .iter()
            .map(|&(ri, ti)| {
                let t = &corpus.reviews[ri].tuples[ti];
                (t.opinion, t.polarity)
            })
            .collect();
        phrases.shuffle(rng);
        for (&(ri, ti), (w, s)) in feature_slots.iter().zip(phrases) {
            let t = &mut out.reviews[ri].tuples[ti];
            t.opinion = w;
            t.polarity = s;
        }
    }
    out
}

/// Compares phrase reuse in the corpus with `n_perm` popularity-preserving
/// permutations.
pub fn permutation_test(
    corpus: &IndexedCorpus,
    scope: PermutationScope,
    n_perm: usize,
    seed: u64,
) -> Result<PermutationReport> {
    if n_perm == 0 {
        return Err(MterError::Config("permutation count must be >= 1".into()));
    }
    if corpus.reviews.is_empty() {
        return Err(MterError::EmptyCorpus);
    }
    let mut mentions = Mentions::new(corpus, scope);
    let observed = mentions.statistic();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let permuted: Vec<f64> = (0..n_perm)
        .map(|_| {
            mentions.shuffle(&mut rng);
            mentions.statistic()
        })
        .collect();
    let exceed = permuted.iter().filter(|&&s| s >= observed).count();
    Ok(PermutationReport {
        scope,
        observed,
        permuted_mean: permuted.iter().sum::<f64>() / n_perm as f64,
        p_value: exceed as f64 / n_perm as f64,
        permuted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{opinion_corpus, OpinionCorpusSpec};
    use std::collections::BTreeMap;

    fn multisets(c: &IndexedCorpus) -> BTreeMap<usize, BTreeMap<(usize, Polarity), usize>> {
        let mut out: BTreeMap<usize, BTreeMap<(usize, Polarity), usize>> = BTreeMap::new();
        for r in &c.reviews {
            for t in &r.tuples {
                *out.entry(t.feature)
                    .or_default()
                    .entry((t.opinion, t.polarity))
                    .or_default() += 1;
            }
        }
        out
    }

    #[test]
    fn personal_phrases_are_maximally_dependent() {
        let c = opinion_corpus(
            &OpinionCorpusSpec {
                dependence: 1.0,
                ..OpinionCorpusSpec::default()
            },
            4,
        );
        let r = permutation_test(&c, PermutationScope::User, 100, 1).unwrap();
        assert_eq!(r.observed, 1.0);
        assert!(r.permuted.iter().all(|&s| s < 1.0));
        assert_eq!(r.p_value, 0.0);
        assert_eq!(r.permuted.len(), 100);
    }

    #[test]
    fn permutation_keeps_phrase_counts() {
        let c = opinion_corpus(&OpinionCorpusSpec::default(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = permute_corpus(&c, &mut rng);
        assert_eq!(multisets(&p), multisets(&c));
        assert_ne!(p, c);
    }

    #[test]
    fn rejects_zero_permutations() {
        let c = opinion_corpus(&OpinionCorpusSpec::default(), 2);
        assert!(matches!(
            permutation_test(&c, PermutationScope::Item, 0, 1),
            Err(MterError::Config(_))
        ));
    }
}
