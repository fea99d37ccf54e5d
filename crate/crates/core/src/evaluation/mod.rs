//! Offline evaluation: NDCG for recommendation and content prediction,
//! reference baselines, paired t-test and the opinion-usage permutation test.

mod baselines;
mod content;
mod ndcg;
mod permutation;
mod recommendation;
mod stats;

pub use baselines::{bprmf_baseline, most_popular_baseline, BprMf, BprMfConfig, MostPopular};
pub use content::{eval_content_prediction, ContentEval, ContentKs};
pub use ndcg::{ndcg_at_k, ndcg_at_k_with, GainKind};
pub use permutation::{
    permutation_test, permute_corpus, reuse_statistic, PermutationReport, PermutationScope,
};
pub use recommendation::{
    eval_recommendation, pair_satisfaction, RecommendationEval, Scorer, UserNdcg,
};
pub use stats::{paired_t_test, PairedTTest};

use serde::{Deserialize, Serialize};

pub const DEFAULT_KS: [usize; 4] = [10, 20, 50, 100];

/// Combined report written by the CLI `evaluate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recommendation: RecommendationEval,
    pub content: ContentEval,
}
