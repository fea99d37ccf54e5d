//! Shared fixtures for the criterion benches.

use mter_core::synthetic::{preference_corpus, PreferenceSpec};
use mter_core::{
    recursive_filter, split_corpus, FilterThresholds, IndexedCorpus, SplitRatios, TrainingTensors,
};

pub struct Fixture {
    pub train: IndexedCorpus,
    pub test: IndexedCorpus,
    pub tensors: TrainingTensors,
}

/// Filtered and split synthetic corpus of `users` users.
pub fn fixture(users: usize) -> Fixture {
    let spec = PreferenceSpec {
        users,
        ..PreferenceSpec::default()
    };
    let syn = preference_corpus(&spec, 1).expect("valid spec");
    let corpus = recursive_filter(&syn.reviews, &FilterThresholds::default(), spec.rating_max)
        .expect("non-empty corpus");
    let (train, _, test) = split_corpus(&corpus, SplitRatios::default(), 1).expect("split");
    let tensors = TrainingTensors::from_corpus(&train).expect("tensors");
    Fixture {
        train,
        test,
        tensors,
    }
}
