use msa_core::discrepancy::{disc_views, DiscMethod};
use msa_core::hypothesis::softmax_in_place;
use msa_core::lmsa::{lmsa_boost, lmsa_minmax, BoostConfig, MinmaxConfig};
use msa_core::loss::view_loss;
use msa_core::synth::gen_bounded_regression;
use msa_core::*;
use proptest::prelude::*;

fn simplex_point(raw: &[f64]) -> MixtureWeight {
    let e: Vec<f64> = raw.iter().map(|u| -u.ln()).collect();
    MixtureWeight::normalized(e).unwrap()
}

fn raw_weights(max_p: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-9f64..1.0, 1..=max_p)
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn skewness_at_least_one(raw in raw_weights(8), raw_m in raw_weights(8)) {
        let p = raw.len().min(raw_m.len());
        let lambda = simplex_point(&raw[..p]);
        let mhat = simplex_point(&raw_m[..p]);
        let s = skewness(&lambda, &mhat).unwrap();
        prop_assert!(s >= 1.0 - 1e-12);
        let at_mhat = skewness(&mhat, &mhat).unwrap();
        prop_assert!((at_mhat - 1.0).abs() < 1e-12);
        // s - 1 is the chi-square divergence, zero only at mhat
        let chi: f64 = lambda.as_slice().iter().zip(mhat.as_slice()).map(|(l, m)| (l - m).powi(2) / m).sum();
        prop_assert!((s - 1.0 - chi).abs() <= 1e-9 * s.max(1.0));
        if l1(lambda.as_slice(), mhat.as_slice()) > 1e-6 {
            prop_assert!(s > 1.0);
        }
    }

    #[test]
    fn softmax_is_a_distribution(scores in prop::collection::vec(-50.0f64..50.0, 1..10)) {
        let mut v = scores.clone();
        softmax_in_place(&mut v);
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(v.iter().all(|x| *x >= 0.0));
    }
}

#[test]
fn cover_has_l1_property() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for p in 1..=6 {
        for eps in [1.0, 0.5, 0.25] {
            let cover = make_cover(p, eps).unwrap();
            for _ in 0..10_000 {
                let raw: Vec<f64> = (0..p).map(|_| rng.random::<f64>().max(1e-300)).collect();
                let mut lambda = simplex_point(&raw).into_vec();
                // also probe faces of the simplex
                if rng.random::<f64>() < 0.2 {
                    let k = rng.random_range(0..p);
                    lambda[k] = 0.0;
                    let total: f64 = lambda.iter().sum();
                    if total > 0.0 {
                        lambda.iter_mut().for_each(|v| *v /= total);
                    } else {
                        lambda[k] = 1.0;
                    }
                }
                let best = cover
                    .points()
                    .iter()
                    .map(|c| c.l1_distance(&lambda))
                    .fold(f64::INFINITY, f64::min);
                assert!(best <= eps + 1e-12, "p={p} eps={eps} lambda={lambda:?} best={best}");
            }
        }
    }
}

fn small_instance(seed: u64) -> DomainCollection {
    gen_bounded_regression(3, 2, 40, 15, 1, seed).unwrap().collection
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn mix_weights_have_unit_mass(raw in prop::collection::vec(1e-9f64..1.0, 3), seed in 0u64..50) {
        let coll = small_instance(seed);
        let lambda = simplex_point(&raw);
        let w = mix_weights(&lambda, &coll).unwrap();
        prop_assert_eq!(w.len(), coll.total_source());
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_loss_is_linear_in_lambda(
        raw in prop::collection::vec(1e-9f64..1.0, 3),
        theta in prop::collection::vec(-1.0f64..1.0, 3),
        seed in 0u64..50,
    ) {
        let coll = small_instance(seed);
        let loss = LossSpec::squared(0.0);
        let h = Hypothesis::from_params(Task::Regression, 2, &theta).unwrap();
        let lambda = simplex_point(&raw);
        let srcs: Vec<&Dataset> = coll.sources().iter().collect();
        let mixed = view_loss(&h, &WeightedView::mixture(&srcs, lambda.as_slice()).unwrap(), &loss).unwrap();
        let parts: f64 = srcs
            .iter()
            .zip(lambda.as_slice())
            .map(|(d, l)| l * empirical_loss(&h, d, None, &loss).unwrap())
            .sum();
        prop_assert!((mixed - parts).abs() <= 1e-12 * mixed.max(1.0), "{} vs {}", mixed, parts);
    }

    #[test]
    fn empirical_loss_is_affine_in_weights(
        raw_a in prop::collection::vec(1e-9f64..1.0, 15),
        raw_b in prop::collection::vec(1e-9f64..1.0, 15),
        alpha in 0.0f64..1.0,
        seed in 0u64..50,
    ) {
        let coll = small_instance(seed);
        let data = coll.target();
        let loss = LossSpec::squared(0.0);
        let h = Hypothesis::regression(vec![0.3, -0.7], 0.1);
        let a = simplex_point(&raw_a).into_vec();
        let b = simplex_point(&raw_b).into_vec();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect();
        let la = empirical_loss(&h, data, Some(&a), &loss).unwrap();
        let lb = empirical_loss(&h, data, Some(&b), &loss).unwrap();
        let lm = empirical_loss(&h, data, Some(&mix), &loss).unwrap();
        prop_assert!((lm - (alpha * la + (1.0 - alpha) * lb)).abs() <= 1e-12 * lm.max(1.0));
    }

    #[test]
    fn ridge_solutions_are_stable_in_lambda(
        raw_a in prop::collection::vec(1e-9f64..1.0, 3),
        raw_b in prop::collection::vec(1e-9f64..1.0, 3),
        seed in 0u64..20,
    ) {
        // |x| <= 1, |y| <= 1 and the unit ball bound every loss by M = 4
        let inst = gen_bounded_regression(3, 3, 60, 10, 1, seed).unwrap();
        let loss = LossSpec::squared(0.05).with_norm_ball(1.0).without_intercept().with_bound(4.0);
        let trainer = MixtureTrainer::for_sources(&inst.collection, &loss, &TrainConfig::default()).unwrap();
        let (la, lb) = (simplex_point(&raw_a), simplex_point(&raw_b));
        let ha = trainer.train(la.as_slice()).unwrap();
        let hb = trainer.train(lb.as_slice()).unwrap();
        let bound = (loss.bound_m * l1(la.as_slice(), lb.as_slice()) / loss.strong_convexity_mu).sqrt() * 1.1;
        prop_assert!(ha.distance(&hb) <= bound, "{} > {}", ha.distance(&hb), bound);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn disc_is_a_pseudo_metric_on_the_grid(seed in 0u64..1000) {
        let inst = gen_bounded_regression(3, 1, 30, 30, 1, seed).unwrap();
        let loss = LossSpec::squared(0.0).with_norm_ball(1.0);
        let method = DiscMethod::Grid { resolution: 0.02 };
        let c = &inst.collection;
        let views: Vec<WeightedView> = [c.source(0), c.source(1), c.target()]
            .into_iter()
            .map(WeightedView::uniform)
            .collect();
        let d = |i: usize, j: usize| disc_views(&views[i], &views[j], &loss, method, 0, None).unwrap().value;
        for i in 0..3 {
            prop_assert!(d(i, i).abs() <= 1e-6);
            for j in 0..3 {
                prop_assert!((d(i, j) - d(j, i)).abs() <= 1e-6);
                prop_assert!(d(i, j) >= 0.0);
                for k in 0..3 {
                    prop_assert!(d(i, k) <= d(i, j) + d(j, k) + 1e-6);
                }
            }
        }
    }

    #[test]
    fn boost_trace_is_monotone(seed in 0u64..1000, hierarchical in any::<bool>()) {
        let coll = small_instance(seed);
        let cover = make_cover(3, 0.25).unwrap();
        let cfg = BoostConfig { candidates: 3, rounds: 20, hierarchical, seed };
        let (_, report) = lmsa_boost(&coll, &cover, &LossSpec::squared(1e-3), &TrainConfig::default(), &cfg).unwrap();
        prop_assert!(report.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn minmax_iterates_are_feasible(seed in 0u64..1000, gamma_max in 1.0f64..200.0) {
        let coll = small_instance(seed);
        let mm = MinmaxConfig { steps: 60, gamma_max, gamma0: gamma_max / 2.0, ..Default::default() };
        let (_, state) = lmsa_minmax(&coll, &LossSpec::squared(1e-2), &TrainConfig::default(), &mm).unwrap();
        for it in &state.trace {
            let l = it.lambda.as_slice();
            prop_assert!(l.iter().all(|v| *v >= 0.0));
            prop_assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!((0.0..=gamma_max).contains(&it.gamma));
        }
    }
}

fn class_data(seed: u64, n: usize, d: usize, k: usize) -> Dataset {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = if x[0] > 0.0 { rng.random_range(0..k.min(2)) } else { rng.random_range(0..k) };
            LabeledExample::new(x, Label::Class(y))
        })
        .collect();
    Dataset::new(1, Task::Classification { classes: k }, d, examples).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn class_predictions_sum_to_one(
        theta in prop::collection::vec(-30.0f64..30.0, 12),
        x in prop::collection::vec(-5.0f64..5.0, 3),
    ) {
        // 3 classes, d = 3: 9 weights and 3 intercepts
        let task = Task::Classification { classes: 3 };
        let h = hypothesis::Hypothesis::from_params(task, 3, &theta).unwrap();
        let Prediction::Dist(p) = h.predict(&x).unwrap() else { panic!("expected a distribution") };
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn example_loss_is_clipped(
        pred in -1e3f64..1e3,
        y in -1e3f64..1e3,
        scores in prop::collection::vec(-60.0f64..60.0, 4),
        class in 0usize..4,
        m in 0.5f64..20.0,
    ) {
        let sq = LossSpec::squared(0.0).with_bound(m);
        let v = example_loss(&sq, &Prediction::Real(pred), Label::Real(y)).unwrap();
        prop_assert!((0.0..=m).contains(&v));
        let mut p = scores.clone();
        softmax_in_place(&mut p);
        for loss in [LossSpec::log(0.0).with_bound(m), LossSpec::zero_one()] {
            let v = example_loss(&loss, &Prediction::Dist(p.clone()), Label::Class(class)).unwrap();
            prop_assert!((0.0..=loss.bound_m).contains(&v));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn erm_beats_random_feasible_hypotheses(seed in 0u64..10_000, scale in 0.1f64..3.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let reg = gen_bounded_regression(2, 3, 60, 20, 1, seed).unwrap().collection;
        let cls = class_data(seed, 80, 3, 3);
        let cases = [
            (reg.source(0).clone(), LossSpec::squared(1e-3)),
            (cls, LossSpec::log(1e-2)),
        ];
        for (data, loss) in &cases {
            let view = WeightedView::uniform(data);
            let h = train_dataset(data, loss, &TrainConfig::default()).unwrap();
            let best = erm::training_objective(&h, &view, loss);
            let n = h.param_len();
            for _ in 0..100 {
                let theta: Vec<f64> = (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
                let other = hypothesis::Hypothesis::from_params(data.task(), data.dim(), &theta).unwrap();
                prop_assert!(best <= erm::training_objective(&other, &view, loss) + 1e-9);
            }
        }
    }

    #[test]
    fn grid_disc_grows_with_the_ball(seed in 0u64..1000) {
        let inst = gen_bounded_regression(2, 1, 30, 30, 1, seed).unwrap();
        let c = &inst.collection;
        let (a, b) = (WeightedView::uniform(c.source(0)), WeightedView::uniform(c.target()));
        let method = DiscMethod::Grid { resolution: 0.01 };
        let mut last = 0.0;
        for radius in [0.25, 0.5, 1.0, 2.0] {
            let loss = LossSpec::squared(0.0).with_norm_ball(radius).with_bound(100.0);
            let v = disc_views(&a, &b, &loss, method, 0, None).unwrap().value;
            prop_assert!(v + 1e-12 >= last, "B={radius}: {v} < {last}");
            last = v;
        }
    }
}
