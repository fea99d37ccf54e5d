use super::{Batch, LossRecord, TrainConfig};
use crate::dense::{Matrix, Tensor3};
use crate::factorization::{contract_with_partials, FactorModel};

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `−Σ ln σ(X̂[i,j,p] − X̂[i,l,p])` over `(i, j, l)`, unweighted.
pub fn bpr_term(model: &FactorModel, pairs: &[(usize, usize, usize)]) -> f64 {
    let p = model.p();
    pairs
        .iter()
        .map(|&(i, j, l)| softplus(-(model.x_unchecked(i, j, p) - model.x_unchecked(i, l, p))))
        .sum()
}

fn squared_errors(batch: &[([usize; 3], f64)], predict: impl Fn([usize; 3]) -> f64) -> f64 {
    batch
        .iter()
        .map(|&(idx, v)| {
            let e = predict(idx) - v;
            e * e
        })
        .sum()
}

pub fn joint_loss(model: &FactorModel, batch: &Batch, config: &TrainConfig) -> LossRecord {
    let x = squared_errors(&batch.x, |[i, j, k]| model.x_unchecked(i, j, k));
    let yu = squared_errors(&batch.yu, |[i, k, w]| model.yu_unchecked(i, k, w));
    let yi = squared_errors(&batch.yi, |[j, k, w]| model.yi_unchecked(j, k, w));
    let bpr = config.lambda_b * bpr_term(model, &batch.pairs);
    let factors = model.users.squared_norm()
        + model.items.squared_norm()
        + model.features.squared_norm()
        + model.opinions.squared_norm();
    let cores = model.g1.squared_norm() + model.g2.squared_norm() + model.g3.squared_norm();
    let regularization = config.lambda_f * factors + config.lambda_g * cores;
    LossRecord {
        iteration: 0,
        x,
        yu,
        yi,
        bpr,
        regularization,
        total: x + yu + yi + bpr + regularization,
    }
}

fn add_scaled(dst: &mut [f64], src: &[f64], scale: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

fn add_outer(core: &mut Tensor3, x: &[f64], y: &[f64], z: &[f64], scale: f64) {
    let [_, d1, d2] = core.dims();
    let g = core.as_mut_slice();
    for (r, xr) in x.iter().enumerate() {
        for (t, yt) in y.iter().enumerate() {
            let w = scale * xr * yt;
            if w == 0.0 {
                continue;
            }
            let base = (r * d1 + t) * d2;
            add_scaled(&mut g[base..base + d2], z, w);
        }
    }
}

/// Accumulates `coef · ∂value/∂θ` for one reconstructed entry
/// `core ×1 A[ra] ×2 B[rb] ×3 C[rc]` and returns the entry's value.
#[allow(clippy::too_many_arguments)]
fn backprop_entry(
    core: &Tensor3,
    (a, ra): (&Matrix, usize),
    (b, rb): (&Matrix, usize),
    (c, rc): (&Matrix, usize),
    grad_core: &mut Tensor3,
    grad_rows: [(&mut Matrix, usize); 3],
    coef: impl FnOnce(f64) -> f64,
) {
    let (x, y, z) = (a.row(ra), b.row(rb), c.row(rc));
    let part = contract_with_partials(core, x, y, z);
    let k = coef(part.value);
    if k == 0.0 {
        return;
    }
    let [(ga, ia), (gb, ib), (gc, ic)] = grad_rows;
    add_scaled(ga.row_mut(ia), &part.dx, k);
    add_scaled(gb.row_mut(ib), &part.dy, k);
    add_scaled(gc.row_mut(ic), &part.dz, k);
    add_outer(grad_core, x, y, z, k);
}

/// Analytic gradient of [`joint_loss`] with respect to every parameter.
pub fn compute_gradients(model: &FactorModel, batch: &Batch, config: &TrainConfig) -> FactorModel {
    let mut g = model.zeros_like();
    let m = model;

    for &([i, j, k], v) in &batch.x {
        let FactorModel {
            users,
            items,
            features,
            g1,
            ..
        } = &mut g;
        backprop_entry(
            &m.g1,
            (&m.users, i),
            (&m.items, j),
            (&m.features, k),
            g1,
            [(users, i), (items, j), (features, k)],
            |pred| 2.0 * (pred - v),
        );
    }
    for &([i, k, w], v) in &batch.yu {
        let FactorModel {
            users,
            features,
            opinions,
            g2,
            ..
        } = &mut g;
        backprop_entry(
            &m.g2,
            (&m.users, i),
            (&m.features, k),
            (&m.opinions, w),
            g2,
            [(users, i), (features, k), (opinions, w)],
            |pred| 2.0 * (pred - v),
        );
    }
    for &([j, k, w], v) in &batch.yi {
        let FactorModel {
            items,
            features,
            opinions,
            g3,
            ..
        } = &mut g;
        backprop_entry(
            &m.g3,
            (&m.items, j),
            (&m.features, k),
            (&m.opinions, w),
            g3,
            [(items, j), (features, k), (opinions, w)],
            |pred| 2.0 * (pred - v),
        );
    }
    if config.lambda_b > 0.0 {
        let p = m.p();
        for &(i, j, l) in &batch.pairs {
            let diff = m.x_unchecked(i, j, p) - m.x_unchecked(i, l, p);
            // d/d diff of softplus(−diff)
            let w = config.lambda_b * sigmoid(-diff);
            for (item, sign) in [(j, -1.0), (l, 1.0)] {
                let FactorModel {
                    users,
                    items,
                    features,
                    g1,
                    ..
                } = &mut g;
                backprop_entry(
                    &m.g1,
                    (&m.users, i),
                    (&m.items, item),
                    (&m.features, p),
                    g1,
                    [(users, i), (items, item), (features, p)],
                    |_| sign * w,
                );
            }
        }
    }

    let reg = [
        2.0 * config.lambda_f,
        2.0 * config.lambda_f,
        2.0 * config.lambda_f,
        2.0 * config.lambda_f,
        2.0 * config.lambda_g,
        2.0 * config.lambda_g,
        2.0 * config.lambda_g,
    ];
    for ((dst, src), r) in g.params_mut().into_iter().zip(m.params()).zip(reg) {
        if r != 0.0 {
            add_scaled(dst, src, r);
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::{init_model, Dims};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(m: &FactorModel, rng: &mut ChaCha8Rng, sizes: [usize; 4]) -> Batch {
        let (nu, ni, p, q) = (m.m(), m.n(), m.p(), m.q());
        Batch {
            x: (0..sizes[0])
                .map(|_| {
                    (
                        [
                            rng.random_range(0..nu),
                            rng.random_range(0..ni),
                            rng.random_range(0..=p),
                        ],
                        rng.random_range(1.0..5.0),
                    )
                })
                .collect(),
            yu: (0..sizes[1])
                .map(|_| {
                    (
                        [
                            rng.random_range(0..nu),
                            rng.random_range(0..p),
                            rng.random_range(0..q),
                        ],
                        rng.random_range(1.0..5.0),
                    )
                })
                .collect(),
            yi: (0..sizes[2])
                .map(|_| {
                    (
                        [
                            rng.random_range(0..ni),
                            rng.random_range(0..p),
                            rng.random_range(0..q),
                        ],
                        rng.random_range(1.0..5.0),
                    )
                })
                .collect(),
            pairs: (0..sizes[3])
                .map(|_| {
                    (
                        rng.random_range(0..nu),
                        rng.random_range(0..ni),
                        rng.random_range(0..ni),
                    )
                })
                .collect(),
        }
    }

    /// Straight-line loss evaluator with explicit index loops.
    fn naive_loss(m: &FactorModel, b: &Batch, cfg: &TrainConfig) -> f64 {
        let tri = |g: &Tensor3, x: &[f64], y: &[f64], z: &[f64]| {
            let [d0, d1, d2] = g.dims();
            let mut s = 0.0;
            for r in 0..d0 {
                for t in 0..d1 {
                    for v in 0..d2 {
                        s += g[(r, t, v)] * x[r] * y[t] * z[v];
                    }
                }
            }
            s
        };
        let mut total = 0.0;
        for &([i, j, k], v) in &b.x {
            total += (tri(&m.g1, m.users.row(i), m.items.row(j), m.features.row(k)) - v).powi(2);
        }
        for &([i, k, w], v) in &b.yu {
            total += (tri(&m.g2, m.users.row(i), m.features.row(k), m.opinions.row(w)) - v).powi(2);
        }
        for &([j, k, w], v) in &b.yi {
            total += (tri(&m.g3, m.items.row(j), m.features.row(k), m.opinions.row(w)) - v).powi(2);
        }
        let p = m.p();
        for &(i, j, l) in &b.pairs {
            let d = tri(&m.g1, m.users.row(i), m.items.row(j), m.features.row(p))
                - tri(&m.g1, m.users.row(i), m.items.row(l), m.features.row(p));
            total -= cfg.lambda_b * (1.0 / (1.0 + (-d).exp())).ln();
        }
        let sq = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
        let params = m.params();
        total += cfg.lambda_f * params[..4].iter().map(|s| sq(s)).sum::<f64>();
        total += cfg.lambda_g * params[4..].iter().map(|s| sq(s)).sum::<f64>();
        total
    }

    #[test]
    fn bpr_values() {
        let m = init_model(Dims::new(2, 2, 2, 2), 1, 2, 1, 1, 0, 1.0).unwrap();
        assert!((bpr_term(&m, &[(0, 1, 1)]) - std::f64::consts::LN_2).abs() < 1e-15);
        // −ln σ(1) = ln(1 + e^{-1}) = 0.31326168751822286
        assert!((softplus(-1.0) - 0.31326168751822286).abs() < 1e-15);
        assert!(softplus(-800.0) < 1e-300);
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn perfect_fit_has_zero_loss() {
        let m = init_model(Dims::new(2, 3, 2, 2), 3, 3, 2, 3, 4, 1.0).unwrap();
        let b = Batch {
            x: vec![([1, 2, 2], m.predict_x(1, 2, 2).unwrap())],
            yu: vec![([0, 1, 2], m.predict_yu(0, 1, 2).unwrap())],
            yi: vec![([2, 0, 1], m.predict_yi(2, 0, 1).unwrap())],
            pairs: vec![],
        };
        let cfg = TrainConfig {
            lambda_b: 0.0,
            lambda_f: 0.0,
            lambda_g: 0.0,
            ..TrainConfig::default()
        };
        assert_eq!(joint_loss(&m, &b, &cfg).total, 0.0);

        let zero = m.zeros_like();
        let b = Batch {
            x: vec![([0, 0, 0], 3.5)],
            ..Batch::default()
        };
        assert_eq!(joint_loss(&zero, &b, &cfg).total, 3.5 * 3.5);
    }

    #[test]
    fn loss_matches_naive_evaluator() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..10 {
            let m = init_model(Dims::new(3, 2, 4, 3), 5, 6, 4, 5, seed, 1.0).unwrap();
            let b = random_batch(&m, &mut rng, [8, 6, 6, 5]);
            let cfg = TrainConfig {
                lambda_b: 0.7,
                lambda_f: 0.03,
                lambda_g: 0.02,
                ..TrainConfig::default()
            };
            let rec = joint_loss(&m, &b, &cfg);
            let want = naive_loss(&m, &b, &cfg);
            assert!((rec.total - want).abs() <= 1e-10 * want.abs().max(1.0));
            let sum = rec.x + rec.yu + rec.yi + rec.bpr + rec.regularization;
            assert!((rec.total - sum).abs() < 1e-9);
        }
    }

    #[test]
    fn regularization_only_gradient() {
        let m = init_model(Dims::new(2, 2, 2, 2), 2, 2, 2, 2, 1, 1.0).unwrap();
        let cfg = TrainConfig {
            lambda_f: 0.3,
            lambda_g: 0.05,
            ..TrainConfig::default()
        };
        let g = compute_gradients(&m, &Batch::default(), &cfg);
        for (block, (gb, pb)) in g.params().iter().zip(m.params()).enumerate() {
            let lam = if block < 4 { 0.3 } else { 0.05 };
            for (gv, pv) in gb.iter().zip(pb) {
                assert!((gv - 2.0 * lam * pv).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn shared_feature_row_gets_all_three_contributions() {
        let m = init_model(Dims::new(2, 2, 2, 2), 2, 2, 2, 2, 5, 1.0).unwrap();
        let cfg = TrainConfig {
            lambda_b: 0.0,
            lambda_f: 0.0,
            lambda_g: 0.0,
            ..TrainConfig::default()
        };
        let only = |x: bool, yu: bool, yi: bool| Batch {
            x: if x { vec![([0, 1, 1], 4.0)] } else { vec![] },
            yu: if yu { vec![([1, 1, 0], 4.0)] } else { vec![] },
            yi: if yi { vec![([0, 1, 1], 4.0)] } else { vec![] },
            pairs: vec![],
        };
        let row = |b: Batch| compute_gradients(&m, &b, &cfg).features.row(1).to_vec();
        let (gx, gu, gi, all) = (
            row(only(true, false, false)),
            row(only(false, true, false)),
            row(only(false, false, true)),
            row(only(true, true, true)),
        );
        for v in 0..2 {
            assert!(gx[v] != 0.0 && gu[v] != 0.0 && gi[v] != 0.0);
            assert!((all[v] - (gx[v] + gu[v] + gi[v])).abs() < 1e-12);
        }
        // dummy row only moves with X and BPR
        let g = compute_gradients(&m, &only(false, true, true), &cfg);
        assert!(g.features.row(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..5 {
            let m = init_model(Dims::new(2, 3, 2, 3), 4, 4, 3, 4, seed, 1.0).unwrap();
            let b = random_batch(&m, &mut rng, [6, 5, 5, 6]);
            let cfg = TrainConfig {
                lambda_b: 0.5,
                lambda_f: 0.02,
                lambda_g: 0.01,
                ..TrainConfig::default()
            };
            let g = compute_gradients(&m, &b, &cfg);
            let h = 1e-5;
            for block in 0..7 {
                for idx in 0..m.params()[block].len() {
                    let mut plus = m.clone();
                    plus.params_mut()[block][idx] += h;
                    let mut minus = m.clone();
                    minus.params_mut()[block][idx] -= h;
                    let fd = (joint_loss(&plus, &b, &cfg).total
                        - joint_loss(&minus, &b, &cfg).total)
                        / (2.0 * h);
                    let an = g.params()[block][idx];
                    let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-8);
                    assert!(rel < 1e-4, "block {block} idx {idx}: {an} vs {fd}");
                }
            }
        }
    }
}
