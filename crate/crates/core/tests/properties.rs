mod common;

use proptest::prelude::*;

use recdenoise::evaluation::evaluate;
use recdenoise::interactions::{split, Interaction, SplitMode, SplitSpec};
use recdenoise::objectives::{dpi_loss, kl_bernoulli, likelihood_dn, likelihood_dp, likelihood_full};
use recdenoise::optim::{adam_step, backward, AdamState, LabeledPair, ModelSet, Objective};
use recdenoise::posterior::bayes_posterior;
use recdenoise::{Arch, InteractionStore, Mode, ModelParams, ObjectiveConfig};

fn prob() -> impl Strategy<Value = f64> {
    1e-6..(1.0 - 1e-6)
}

fn store_strategy() -> impl Strategy<Value = InteractionStore> {
    (2usize..12, 2usize..12)
        .prop_flat_map(|(u, i)| {
            (Just(u), Just(i), proptest::collection::btree_set((0..u, 0..i), 1..(u * i).min(40)))
        })
        .prop_map(|(u, i, pairs)| {
            let rows = pairs
                .into_iter()
                .enumerate()
                .map(|(t, (a, b))| Interaction::new(a, b).with_timestamp(t as i64 * 7 % 13))
                .collect();
            InteractionStore::new(u, i, rows).unwrap()
        })
}

proptest! {
    #[test]
    fn kl_is_non_negative(p in prob(), q in prob()) {
        prop_assert!(kl_bernoulli(p, q) >= -1e-15);
    }

    #[test]
    fn likelihood_matches_enumeration(f in prob(), h in prob(), hp in prob(), obs in any::<bool>()) {
        let a = likelihood_full(&[f], &[h], &[hp], &[obs]);
        prop_assert!((a - common::likelihood_enum(f, h, hp, obs)).abs() < 1e-12);
    }

    #[test]
    fn substitution_identities(f in prob(), h in prob(), hp in prob(), obs in any::<bool>(), c in 21.0f64..2000.0) {
        // h' = 1 - e^-c is not representable for large c; enumerate in log space.
        let dp = likelihood_dp(&[f], &[h], &[obs], c);
        let logs = [h.ln(), (-h).ln_1p(), (-(-c).exp()).ln_1p(), -c];
        prop_assert!((dp - common::likelihood_enum_logs(f, logs, obs)).abs() < 1e-9);
        let c = c.min(700.0);
        let dn = likelihood_dn(&[f], &[hp], &[obs], c);
        let full = likelihood_full(&[f], &[(-c).exp()], &[hp], &[obs]);
        prop_assert!((dn - full).abs() < 1e-9);
    }

    #[test]
    fn substitution_residual_is_bounded_by_exp_minus_c(f in prob(), h in prob(), hp in prob(), obs in any::<bool>(), c in 0.5f64..12.0) {
        // The specialised forms drop a ln(1 - e^-c) term weighted by f or 1 - f.
        let bound = -(-(-c).exp()).ln_1p() * (1.0 + 1e-6) + 1e-12;
        let dp = likelihood_dp(&[f], &[h], &[obs], c);
        let full = likelihood_full(&[f], &[h], &[1.0 - (-c).exp()], &[obs]);
        prop_assert!((dp - full).abs() <= bound);
        let dn = likelihood_dn(&[f], &[hp], &[obs], c);
        let full = likelihood_full(&[f], &[(-c).exp()], &[hp], &[obs]);
        prop_assert!((dn - full).abs() <= bound);
    }

    #[test]
    fn dpi_kl_part_symmetric_at_half(f in prob(), g in prob(), h in prob(), hp in prob(), obs in any::<bool>()) {
        // The likelihood part depends on the first argument only; cancel it.
        let cfg = ObjectiveConfig::new(0.5, 10.0, 10.0, Mode::Dn);
        let lik = |x: f64| -likelihood_dn(&[x], &[hp], &[obs], 10.0);
        let kl_fg = dpi_loss(&[f], &[g], &[h], &[hp], &[obs], &cfg) - lik(f);
        let kl_gf = dpi_loss(&[g], &[f], &[h], &[hp], &[obs], &cfg) - lik(g);
        prop_assert!((kl_fg - kl_gf).abs() < 1e-9);
    }

    #[test]
    fn posterior_matches_enumeration_and_is_monotone(f in prob(), h in prob(), hp in prob()) {
        let p = bayes_posterior(f, h, hp);
        prop_assert!((p - common::posterior_enum(f, h, hp)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&p));
        let d = 1e-4;
        prop_assert!(bayes_posterior((f + d).min(1.0 - 1e-9), h, hp) >= p - 1e-15);
        prop_assert!(bayes_posterior(f, h, (hp + d).min(1.0 - 1e-9)) >= p - 1e-15);
        prop_assert!(bayes_posterior(f, (h + d).min(1.0 - 1e-9), hp) <= p + 1e-15);
    }

    #[test]
    fn split_partitions_the_store(
        store in store_strategy(),
        seed in any::<u64>(),
        mode in prop_oneof![Just(SplitMode::Random), Just(SplitMode::PerUser), Just(SplitMode::Chronological)],
    ) {
        let spec = SplitSpec { mode, seed, ..SplitSpec::default() };
        let (a, b, c) = split(&store, &spec).unwrap();
        let mut all: Vec<(usize, usize)> = [a, b, c]
            .iter()
            .flat_map(|s| s.interactions().iter().map(|it| (it.user, it.item)).collect::<Vec<_>>())
            .collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), n);
        let full: Vec<(usize, usize)> = store.interactions().iter().map(|it| (it.user, it.item)).collect();
        prop_assert_eq!(all, full);
    }

    #[test]
    fn metrics_ignore_monotone_rescaling(seed in any::<u64>(), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let m = ModelParams::<f64>::init(Arch::Gmf, 8, 10, 4, seed).unwrap();
        let train = InteractionStore::new(8, 10, (0..8).map(|u| Interaction::new(u, u)).collect()).unwrap();
        let test = InteractionStore::new(8, 10, (0..8).map(|u| Interaction::new(u, (u + 3) % 10)).collect()).unwrap();
        let raw = |u: usize, i: usize| m.logit(u, i);
        let warped = |u: usize, i: usize| (scale * m.logit(u, i) + shift).exp();
        let a = evaluate(&raw, &test, &train, &[1, 3, 5]).unwrap();
        let b = evaluate(&warped, &test, &train, &[1, 3, 5]).unwrap();
        prop_assert_eq!(a, b);
        for c in &evaluate(&raw, &test, &train, &[1, 3, 5]).unwrap().cutoffs {
            prop_assert!((0.0..=1.0).contains(&c.recall) && (0.0..=1.0).contains(&c.ndcg));
        }
    }

    #[test]
    fn checkpoints_round_trip(
        arch in prop_oneof![Just(Arch::Mf), Just(Arch::Gmf), Just(Arch::NeuMf)],
        users in 1usize..6, items in 1usize..6, dim in 1usize..9, seed in any::<u64>(),
    ) {
        let m = ModelParams::<f64>::init(arch, users, items, dim, seed).unwrap();
        let bytes = m.to_bytes();
        let back = ModelParams::<f64>::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(&back, &m);
        let m32 = ModelParams::<f32>::init(arch, users, items, dim, seed).unwrap();
        prop_assert_eq!(ModelParams::<f32>::from_bytes(&m32.to_bytes()).unwrap(), m32);
    }

    #[test]
    fn untouched_rows_and_moments_stay_bit_identical(seed in any::<u64>(), u in 0usize..6, i in 0usize..6, obs in any::<bool>()) {
        let m0 = ModelParams::<f64>::init(Arch::Gmf, 6, 6, 3, seed).unwrap();
        let mut m = m0.clone();
        let mut st = AdamState::new(&m0, 0.01);
        let pairs = [LabeledPair { user: u, item: i, observed: obs }];
        let b = backward(&Objective::Bce, &ModelSet::target_only(&m), &pairs).unwrap();
        adam_step(&mut m, &b.target, &mut st).unwrap();
        for r in (0..6).filter(|&r| r != u) {
            prop_assert_eq!(m.blocks[0].row(r), m0.blocks[0].row(r));
            prop_assert!(st.first[0][r * 3..r * 3 + 3].iter().all(|&x| x == 0.0));
        }
        for r in (0..6).filter(|&r| r != i) {
            prop_assert_eq!(m.blocks[1].row(r), m0.blocks[1].row(r));
        }
    }
}

#[test]
fn kl_grid_is_zero_only_on_the_diagonal() {
    for a in 1..100 {
        for b in 1..100 {
            let (p, q) = (a as f64 / 100.0, b as f64 / 100.0);
            let d = kl_bernoulli(p, q);
            assert!(d >= 0.0, "kl({p}, {q}) = {d}");
            assert_eq!(d == 0.0, a == b, "kl({p}, {q}) = {d}");
        }
    }
}

#[test]
fn dvae_prior_weights_are_untouched_by_training() {
    let prior = ModelParams::<f64>::init(Arch::Mf, 4, 4, 3, 1).unwrap();
    let before = prior.to_bytes();
    let f = ModelParams::<f64>::init(Arch::Mf, 4, 4, 3, 2).unwrap();
    let h = ModelParams::<f64>::init(Arch::Mf, 4, 4, 3, 3).unwrap();
    let set = ModelSet { target: &f, aux: Some(&prior), h: Some(&h), h_prime: Some(&h) };
    let pairs = [LabeledPair { user: 0, item: 1, observed: true }, LabeledPair { user: 2, item: 3, observed: false }];
    let b = backward(&Objective::Dvae(ObjectiveConfig::new(0.5, 1000.0, 10.0, Mode::Dp)), &set, &pairs).unwrap();
    assert!(b.aux.is_none());
    assert_eq!(prior.to_bytes(), before);
}
