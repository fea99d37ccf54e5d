use mter_core::evaluation::{
    eval_content_prediction, eval_recommendation, most_popular_baseline, pair_satisfaction,
    ContentKs, GainKind,
};
use mter_core::ranking::{recommend, render_item, ExplanationTemplate};
use mter_core::synthetic::{preference_corpus, PreferenceSpec};
use mter_core::{
    load_lexicon, load_reviews, recursive_filter, split_corpus, train, write_lexicon,
    write_reviews, Dims, FilterThresholds, IndexedCorpus, SplitRatios, TrainConfig,
    TrainingTensors,
};

fn small_corpus() -> (IndexedCorpus, IndexedCorpus, IndexedCorpus) {
    let spec = PreferenceSpec {
        users: 120,
        items: 60,
        ..PreferenceSpec::default()
    };
    let syn = preference_corpus(&spec, 4).unwrap();
    let filtered = recursive_filter(&syn.reviews, &FilterThresholds::default(), 5).unwrap();
    split_corpus(&filtered, SplitRatios::default(), 9).unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        t_iter: 1500,
        eval_interval: 500,
        eta: 0.3,
        lambda_b: 10.0,
        dims: Dims::new(6, 6, 4, 4),
        seed: 2,
        ..TrainConfig::default()
    }
}

#[test]
fn files_round_trip_through_the_loaders() {
    let syn = preference_corpus(&PreferenceSpec::default(), 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (r, l) = (dir.path().join("r.jsonl"), dir.path().join("l.tsv"));
    write_reviews(&r, &syn.reviews).unwrap();
    write_lexicon(&l, &syn.lexicon).unwrap();
    let lexicon = load_lexicon(&l).unwrap();
    assert_eq!(lexicon.entries(), syn.lexicon.entries());
    assert_eq!(load_reviews(&r, &lexicon, 5).unwrap(), syn.reviews);
}

#[test]
fn train_evaluate_recommend() {
    let (train_c, _, test_c) = small_corpus();
    let tensors = TrainingTensors::from_corpus(&train_c).unwrap();
    let (model, trace) = train(&tensors, &small_config()).unwrap();
    assert!(model.is_nonnegative());
    assert_eq!(trace.records.len(), 3);
    assert!(trace.records.iter().all(|r| r.total.is_finite()));

    let sat = pair_satisfaction(&model, &tensors.pairs).unwrap();
    assert!(sat > 0.6, "{sat}");

    let ks = [10, 20];
    let eval = eval_recommendation(&model, &train_c, &test_c, &ks, GainKind::Exponential).unwrap();
    assert_eq!(eval.ks, ks);
    assert!(eval.users > 0);
    assert!(eval.ndcg.iter().all(|v| (0.0..=1.0).contains(v)));
    let popular = most_popular_baseline(&train_c);
    let base =
        eval_recommendation(&popular, &train_c, &test_c, &ks, GainKind::Exponential).unwrap();
    assert_eq!(base.users, eval.users);

    let content = eval_content_prediction(&model, &test_c, ContentKs::default()).unwrap();
    assert!((0.0..=1.0).contains(&content.feature_ndcg));

    let seen = &train_c.items_by_user()[0];
    let rec = recommend(&model, &train_c, 0, seen, 5, 3, 3).unwrap();
    assert_eq!(rec.items.len(), 5);
    for item in &rec.items {
        assert!(!seen.contains(&train_c.items.get(&item.item).unwrap()));
        assert_eq!(item.features.len(), 3);
        let text = render_item(item, &ExplanationTemplate::default()).unwrap();
        assert!(text.starts_with(&format!("Recommendation: {}\nExplanation: Its ", item.item)));
    }
    assert!(rec.items.windows(2).all(|w| w[0].score >= w[1].score));
}

#[test]
fn training_is_seed_deterministic() {
    let (train_c, _, _) = small_corpus();
    let tensors = TrainingTensors::from_corpus(&train_c).unwrap();
    let cfg = TrainConfig {
        t_iter: 200,
        ..small_config()
    };
    let (a, ta) = train(&tensors, &cfg).unwrap();
    let (b, tb) = train(&tensors, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    let (c, _) = train(&tensors, &TrainConfig { seed: 3, ..cfg }).unwrap();
    assert_ne!(a, c);
}
