use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mter_bench::fixture;
use mter_core::evaluation::{eval_recommendation, GainKind};
use mter_core::training::{compute_gradients, BatchSampler, Trainer};
use mter_core::{init_model, mode_product, Mode, TrainConfig};

fn kernels(c: &mut Criterion) {
    let fx = fixture(300);
    let (corpus, tensors) = (&fx.train, &fx.tensors);
    let cfg = TrainConfig::default();
    let (m, n, p, q) = (corpus.m(), corpus.n(), corpus.p(), corpus.q());
    let model = init_model(cfg.dims, m, n, p, q, 0, cfg.init_scale).unwrap();
    let sampler = BatchSampler::new(tensors).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch = sampler.sample(&cfg, &mut rng);

    c.bench_function("overall_scores/one_user", |b| {
        b.iter(|| model.overall_scores(black_box(0)).unwrap())
    });
    c.bench_function("mode_product/full_x", |b| {
        b.iter(|| {
            let t = mode_product(&model.g1, &model.users, Mode::One).unwrap();
            let t = mode_product(&t, &model.items, Mode::Two).unwrap();
            mode_product(&t, &model.features, Mode::Three).unwrap()
        })
    });
    c.bench_function("sample_batch", |b| {
        b.iter(|| sampler.sample(&cfg, &mut rng))
    });
    c.bench_function("compute_gradients/default_batch", |b| {
        b.iter(|| compute_gradients(black_box(&model), &batch, &cfg))
    });
    c.bench_function("train_step/default_batch", |b| {
        let mut trainer = Trainer::new(model.clone(), cfg.clone()).unwrap();
        b.iter(|| trainer.step(&batch).unwrap())
    });
    c.bench_function("eval_recommendation/all_users", |b| {
        b.iter(|| {
            eval_recommendation(&model, corpus, &fx.test, &[10], GainKind::Exponential).unwrap()
        })
    });
}

criterion_group!(benches, kernels);
criterion_main!(benches);
