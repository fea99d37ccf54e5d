//! Multi-task explainable recommendation.
//!
//! Reviews are parsed into (feature, opinion, polarity) tuples and summarized
//! into three non-negative tensors: user × item × feature (with the overall
//! rating appended as a dummy feature), user × feature × opinion and
//! item × feature × opinion. The tensors are jointly factorized with shared
//! factor matrices and per-tensor Tucker cores, under a pairwise ranking
//! constraint on the overall-rating slice. The learnt model ranks items for a
//! user and explains each recommendation with the features and opinion
//! phrases it predicts the user would write about.
//!
//! Modules follow the pipeline order:
//!
//! - [`corpus`]: lexicon and review loading, recursive filtering, splitting
//! - [`tensors`]: observation tensors and pairwise order sets
//! - [`dense`] and [`factorization`]: the factor model and its predictions
//! - [`training`]: joint loss, gradients, sampling and projected AdaGrad
//! - [`ranking`]: top-K recommendation and textual explanations
//! - [`evaluation`]: NDCG, baselines, paired t-test and permutation test
//! - [`synthetic`]: seeded generators for planted-model and preference corpora

pub mod corpus;
pub mod dense;
pub mod error;
pub mod evaluation;
pub mod factorization;
pub mod ranking;
pub mod synthetic;
pub mod tensors;
pub mod training;

pub use corpus::{
    load_lexicon, load_reviews, recursive_filter, split_corpus, write_lexicon, write_reviews,
    FilterThresholds, IndexedCorpus, IndexedReview, IndexedTuple, Lexicon, LexiconEntry, Polarity,
    ReviewRecord, SplitRatios,
};
pub use dense::{mode_product, Matrix, Mode, Tensor3};
pub use error::{MterError, Result};
pub use factorization::{init_model, Dims, FactorModel};
pub use tensors::{
    aggregate_feature_scores, build_pair_sets, build_x, build_yi, build_yu, FeatureScoreTable,
    PairOrderSet, RatingTable, SparseTensor3, TrainingTensors,
};
pub use training::{
    relative_bpr_weight, train, train_with_observer, LossRecord, LossTrace, TrainConfig,
};
