//! Production paths against the brute-force references in `oracle`.

use ldrld_core::losses::{ldrld_total, llki_loss, pair_loss, rntk_loss, vanilla_kd_loss, DistillConfig};
use ldrld_core::oracle::{oracle_ldrld, oracle_topd_recursive, selection_sort_ranking};
use ldrld_core::ranking::{rank_by_student, split_top_d};
use ldrld_core::tensor::Tape;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(rng: &mut ChaCha8Rng, n: usize, span: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-span..span)).collect()
}

fn softmax(z: &[f64], tau: f64) -> Vec<f64> {
    let e: Vec<f64> = z.iter().map(|v| (v / tau).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum()
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let a = uniform(&mut rng, 12, 5.0);
        let b = uniform(&mut rng, 8, 5.0);
        let tape = Tape::new();
        let c = tape
            .matrix(3, 4, a.clone(), false)
            .unwrap()
            .matmul(tape.matrix(4, 2, b.clone(), false).unwrap())
            .unwrap()
            .value();
        for i in 0..3 {
            for j in 0..2 {
                let mut s = 0.0;
                for p in 0..4 {
                    s += a[i * 4 + p] * b[p * 2 + j];
                }
                assert!((c[i * 2 + j] - s).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn ranking_matches_selection_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..500 {
        let mut z = uniform(&mut rng, 20, 3.0);
        // force some ties
        if rng.random_bool(0.5) {
            let (a, b) = (rng.random_range(0..20), rng.random_range(0..20));
            z[a] = z[b];
        }
        assert_eq!(rank_by_student(&z).unwrap().perm(), selection_sort_ranking(&z).as_slice());
    }
}

#[test]
fn split_matches_recursive_extraction() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let c = rng.random_range(2..=30);
        let d = rng.random_range(2..=c);
        let z_t = uniform(&mut rng, c, 5.0);
        let mut z_s = uniform(&mut rng, c, 5.0);
        if rng.random_bool(0.2) {
            // coarse grid produces ties
            z_s.iter_mut().for_each(|v| *v = v.round());
        }
        let order = rank_by_student(&z_s).unwrap();
        let fast = split_top_d(&z_t, &z_s, &order, d).unwrap();
        let slow = oracle_topd_recursive(&z_t, &z_s, d).unwrap();
        assert_eq!(fast, slow);
    }
}

#[test]
fn split_fixed_case_c15_d7() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let z_t = uniform(&mut rng, 15, 5.0);
    let z_s = uniform(&mut rng, 15, 5.0);
    let order = rank_by_student(&z_s).unwrap();
    let fast = split_top_d(&z_t, &z_s, &order, 7).unwrap();
    let slow = oracle_topd_recursive(&z_t, &z_s, 7).unwrap();
    assert_eq!(fast.top_t, slow.top_t);
    assert_eq!(fast.top_s, slow.top_s);
}

#[test]
fn pair_loss_matches_pair_loop_d7() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let t = uniform(&mut rng, 7, 5.0);
        let s = uniform(&mut rng, 7, 5.0);
        let tau = rng.random_range(0.5..6.0);
        for adw in [false, true] {
            let cfg = DistillConfig { depth: 7, tau, adw_enabled: adw, ..Default::default() };
            let mut want = 0.0;
            let mut count = 0;
            for i in 0..7 {
                for j in (i + 1)..7 {
                    let pt = softmax(&[t[i], t[j]], tau);
                    let ps = softmax(&[s[i], s[j]], tau);
                    let (ri, rj) = ((i + 1) as f64, (j + 1) as f64);
                    let w = if adw { 2.0 * (-0.05 * (ri + rj)).exp() / ((rj - ri) + 1.5) } else { 1.0 };
                    want += w * kl(&pt, &ps);
                    count += 1;
                }
            }
            assert_eq!(count, 21);
            let got = pair_loss(&t, &s, &cfg).unwrap();
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }
}

#[test]
fn rntk_matches_13_way_kl() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let z_t = uniform(&mut rng, 20, 5.0);
        let z_s = uniform(&mut rng, 20, 5.0);
        let order = rank_by_student(&z_s).unwrap();
        let split = split_top_d(&z_t, &z_s, &order, 7).unwrap();
        assert_eq!(split.rest_s.len(), 13);
        let want = kl(&softmax(&split.rest_t, 4.0), &softmax(&split.rest_s, 4.0));
        assert!((rntk_loss(&split.rest_t, &split.rest_s, 4.0).unwrap() - want).abs() < 1e-10);
        let want = kl(&softmax(&split.top_t, 4.0), &softmax(&split.top_s, 4.0));
        assert!((llki_loss(&split.top_t, &split.top_s, 4.0).unwrap() - want).abs() < 1e-10);
    }
}

#[test]
fn vanilla_kd_matches_direct_c10() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let z_t = uniform(&mut rng, 10, 5.0);
        let z_s = uniform(&mut rng, 10, 5.0);
        let tau = rng.random_range(0.5..6.0);
        let want = kl(&softmax(&z_t, tau), &softmax(&z_s, tau));
        assert!((vanilla_kd_loss(&z_t, &z_s, tau).unwrap() - want).abs() < 1e-10);
    }
}

#[test]
fn total_matches_monolithic_oracle_default_c20() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = DistillConfig::default();
    for _ in 0..200 {
        let z_t = uniform(&mut rng, 20, 5.0);
        let z_s = uniform(&mut rng, 20, 5.0);
        let label = rng.random_range(0..20);
        let got = ldrld_total(&z_t, &z_s, label, &cfg).unwrap().total;
        let want = oracle_ldrld(&z_t, &z_s, label, &cfg).unwrap();
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn unweighted_path_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let c = rng.random_range(5..=30);
        let cfg = DistillConfig { depth: rng.random_range(2..=c), adw_enabled: false, ..Default::default() };
        let z_t = uniform(&mut rng, c, 5.0);
        let z_s = uniform(&mut rng, c, 5.0);
        let got = ldrld_total(&z_t, &z_s, 0, &cfg).unwrap().total;
        assert!((got - oracle_ldrld(&z_t, &z_s, 0, &cfg).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn split_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let c = rng.random_range(2..=30);
        let d = rng.random_range(2..=c);
        let z_t = uniform(&mut rng, c, 5.0);
        let z_s = uniform(&mut rng, c, 5.0);
        let mut sigma: Vec<usize> = (0..c).collect();
        sigma.shuffle(&mut rng);
        // class k moves to position sigma[k]
        let mut pt = vec![0.0; c];
        let mut ps = vec![0.0; c];
        for k in 0..c {
            pt[sigma[k]] = z_t[k];
            ps[sigma[k]] = z_s[k];
        }
        let a = split_top_d(&z_t, &z_s, &rank_by_student(&z_s).unwrap(), d).unwrap();
        let b = split_top_d(&pt, &ps, &rank_by_student(&ps).unwrap(), d).unwrap();
        assert_eq!(a.top_s, b.top_s);
        assert_eq!(a.top_t, b.top_t);
        assert_eq!(a.rest_t, b.rest_t);
        let mapped: Vec<usize> = a.top_classes.iter().map(|&k| sigma[k]).collect();
        assert_eq!(mapped, b.top_classes);
    }
}

fn config_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, DistillConfig, usize)> {
    (5usize..=30).prop_flat_map(|c| {
        (
            prop::collection::vec(-5.0f64..5.0, c),
            prop::collection::vec(-5.0f64..5.0, c),
            2usize..=c,
            0.5f64..8.0,
            0.0f64..8.0,
            0.0f64..8.0,
            any::<bool>(),
            0..c,
        )
            .prop_map(|(t, s, depth, tau, alpha, beta, adw_enabled, label)| {
                let cfg = DistillConfig { depth, tau, alpha, beta, adw_enabled, ..Default::default() };
                (t, s, cfg, label)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn distillation_terms_nonnegative((t, s, cfg, label) in config_strategy()) {
        let b = ldrld_total(&t, &s, label, &cfg).unwrap();
        for v in [b.weighted_pairs, b.llki, b.rntk, b.kd, b.task] {
            prop_assert!(v >= -1e-12, "{b:?}");
        }
    }

    #[test]
    fn distillation_terms_vanish_on_agreement((_t, s, cfg, label) in config_strategy()) {
        let b = ldrld_total(&s, &s, label, &cfg).unwrap();
        prop_assert_eq!(b.weighted_pairs, 0.0);
        prop_assert_eq!(b.llki, 0.0);
        prop_assert_eq!(b.rntk, 0.0);
        prop_assert_eq!(b.total, b.task);
    }

    #[test]
    fn distillation_terms_shift_invariant((t, s, cfg, label) in config_strategy(), shift in -20.0f64..20.0) {
        let a = ldrld_total(&t, &s, label, &cfg).unwrap();
        let ts: Vec<f64> = t.iter().map(|v| v + shift).collect();
        let ss: Vec<f64> = s.iter().map(|v| v + shift).collect();
        let b = ldrld_total(&ts, &ss, label, &cfg).unwrap();
        prop_assert!((a.weighted_pairs - b.weighted_pairs).abs() < 1e-10);
        prop_assert!((a.llki - b.llki).abs() < 1e-10);
        prop_assert!((a.rntk - b.rntk).abs() < 1e-10);
    }

    #[test]
    fn oracle_agrees((t, s, cfg, label) in config_strategy()) {
        let got = ldrld_total(&t, &s, label, &cfg).unwrap().total;
        let want = oracle_ldrld(&t, &s, label, &cfg).unwrap();
        prop_assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn softmax_sums_to_one(z in prop::collection::vec(-50.0f64..50.0, 1..40), tau in 0.1f64..10.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mask: Vec<bool> = (0..z.len()).map(|_| rng.random_bool(0.5)).collect();
        mask[0] = true;
        let tape = Tape::new();
        let p = tape.vector(z, false).unwrap().softmax_masked(&mask, tau).unwrap().value();
        let total: f64 = p.iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| v).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().zip(&mask).all(|(v, &m)| m || *v == 0.0));
    }
}
