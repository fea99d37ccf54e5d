use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Gain of a graded relevance `g`: `2^g − 1` or `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainKind {
    #[default]
    Exponential,
    Linear,
}

impl GainKind {
    fn apply(self, g: f64) -> f64 {
        match self {
            GainKind::Exponential => g.exp2() - 1.0,
            GainKind::Linear => g,
        }
    }
}

fn dcg(gains: impl Iterator<Item = f64>, kind: GainKind) -> f64 {
    gains
        .enumerate()
        .map(|(r, g)| kind.apply(g) / ((r + 2) as f64).log2())
        .sum()
}

/// NDCG@k with exponential gain. Zero when no item has positive gain.
pub fn ndcg_at_k(ranked: &[usize], gains: &HashMap<usize, f64>, k: usize) -> f64 {
    ndcg_at_k_with(ranked, gains, k, GainKind::Exponential)
}

pub fn ndcg_at_k_with(
    ranked: &[usize],
    gains: &HashMap<usize, f64>,
    k: usize,
    kind: GainKind,
) -> f64 {
    let mut ideal: Vec<f64> = gains.values().copied().filter(|&g| g > 0.0).collect();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(ideal.into_iter().take(k), kind);
    if idcg == 0.0 {
        return 0.0;
    }
    let got = dcg(
        ranked
            .iter()
            .take(k)
            .map(|id| gains.get(id).copied().unwrap_or(0.0)),
        kind,
    );
    got / idcg
}
