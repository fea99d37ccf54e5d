//! Top-K recommendation, feature and phrase rankings, and template-rendered
//! textual explanations.
//!
//! All rankings sort by score descending and break ties by ascending index.

use serde::{Deserialize, Serialize};

use crate::corpus::IndexedCorpus;
use crate::error::{MterError, Result};
use crate::factorization::FactorModel;

fn rank(scores: impl IntoIterator<Item = (usize, f64)>, top: usize) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = scores.into_iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.truncate(top);
    v
}

fn check_top(name: &str, k: usize) -> Result<()> {
    if k == 0 {
        return Err(MterError::Config(format!("{name} must be >= 1")));
    }
    Ok(())
}

/// Candidate items (all items except the sorted `excluded` ones) ranked by
/// `scores`, truncated to `k`. Every item ranking, for the model and the
/// baselines alike, goes through here.
pub fn rank_candidates(scores: Vec<f64>, excluded: &[usize], k: usize) -> Vec<(usize, f64)> {
    rank(
        scores
            .into_iter()
            .enumerate()
            .filter(|(j, _)| excluded.binary_search(j).is_err()),
        k,
    )
}

/// Items the user has not trained on, ranked by predicted overall rating.
/// `training_items` must be sorted.
pub fn recommend_topk(
    model: &FactorModel,
    user: usize,
    training_items: &[usize],
    k: usize,
) -> Result<Vec<(usize, f64)>> {
    check_top("K", k)?;
    Ok(rank_candidates(
        model.overall_scores(user)?,
        training_items,
        k,
    ))
}

/// Real features (dummy excluded) ranked by predicted user × item affinity.
pub fn rank_features(
    model: &FactorModel,
    user: usize,
    item: usize,
    top_f: usize,
) -> Result<Vec<(usize, f64)>> {
    check_top("top_f", top_f)?;
    Ok(rank(
        model.feature_scores(user, item)?.into_iter().enumerate(),
        top_f,
    ))
}

/// Opinion phrases for one feature ranked by the user-side × item-side score.
pub fn rank_opinions(
    model: &FactorModel,
    user: usize,
    item: usize,
    feature: usize,
    top_w: usize,
) -> Result<Vec<(usize, f64)>> {
    check_top("top_w", top_w)?;
    Ok(rank(
        model
            .opinion_scores(user, item, feature)?
            .into_iter()
            .enumerate(),
        top_w,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPhrase {
    pub phrase: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExplanation {
    pub feature: String,
    pub score: f64,
    pub phrases: Vec<ScoredPhrase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendedItem {
    pub item: String,
    pub score: f64,
    pub features: Vec<FeatureExplanation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub user: String,
    pub items: Vec<RecommendedItem>,
}

/// Top features of `item` for `user`, each with its top phrases.
pub fn explain_item(
    model: &FactorModel,
    corpus: &IndexedCorpus,
    user: usize,
    item: usize,
    top_f: usize,
    top_w: usize,
) -> Result<Vec<FeatureExplanation>> {
    rank_features(model, user, item, top_f)?
        .into_iter()
        .map(|(k, score)| {
            let phrases = rank_opinions(model, user, item, k, top_w)?
                .into_iter()
                .map(|(w, s)| ScoredPhrase {
                    phrase: corpus.opinions.names()[w].clone(),
                    score: s,
                })
                .collect();
            Ok(FeatureExplanation {
                feature: corpus.features.names()[k].clone(),
                score,
                phrases,
            })
        })
        .collect()
}

/// Full recommendation list with per-item explanations.
pub fn recommend(
    model: &FactorModel,
    corpus: &IndexedCorpus,
    user: usize,
    training_items: &[usize],
    k: usize,
    top_f: usize,
    top_w: usize,
) -> Result<Recommendation> {
    let items = recommend_topk(model, user, training_items, k)?
        .into_iter()
        .map(|(j, score)| {
            Ok(RecommendedItem {
                item: corpus.items.names()[j].clone(),
                score,
                features: explain_item(model, corpus, user, j, top_f, top_w)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Recommendation {
        user: corpus.users.names()[user].clone(),
        items,
    })
}

/// Text patterns for explanations. `{item}`, `{feature}`, `{phrases}` and
/// `{phrase}` are the placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationTemplate {
    pub header: String,
    pub sentence: String,
    pub phrase: String,
    pub phrase_separator: String,
    pub sentence_separator: String,
}

impl Default for ExplanationTemplate {
    fn default() -> Self {
        Self {
            header: "Recommendation: {item}\nExplanation: ".into(),
            sentence: "Its {feature} is {phrases}.".into(),
            phrase: "[{phrase}]".into(),
            phrase_separator: " ".into(),
            sentence_separator: " ".into(),
        }
    }
}

pub fn render_explanation(
    item: &str,
    features: &[(String, Vec<String>)],
    template: &ExplanationTemplate,
) -> Result<String> {
    if features.is_empty() {
        return Err(MterError::Validation(
            "explanation needs at least one feature".into(),
        ));
    }
    let mut sentences = Vec::with_capacity(features.len());
    for (feature, phrases) in features {
        if phrases.is_empty() {
            return Err(MterError::Validation(format!(
                "feature {feature:?} has no phrases"
            )));
        }
        let phrases = phrases
            .iter()
            .map(|p| template.phrase.replace("{phrase}", p))
            .collect::<Vec<_>>()
            .join(&template.phrase_separator);
        sentences.push(
            template
                .sentence
                .replace("{feature}", feature)
                .replace("{phrases}", &phrases),
        );
    }
    Ok(format!(
        "{}{}",
        template.header.replace("{item}", item),
        sentences.join(&template.sentence_separator)
    ))
}

/// Renders a [`RecommendedItem`] with its phrase lists.
pub fn render_item(item: &RecommendedItem, template: &ExplanationTemplate) -> Result<String> {
    let features: Vec<(String, Vec<String>)> = item
        .features
        .iter()
        .map(|f| {
            (
                f.feature.clone(),
                f.phrases.iter().map(|p| p.phrase.clone()).collect(),
            )
        })
        .collect();
    render_explanation(&item.item, &features, template)
}
