//! Independent reference implementations checked against the library.

mod common;

use dmind3_core::harness::{nearest_rank, percentiles};
use dmind3_core::intent::SelectorRegistry;
use dmind3_core::objectives::{c3_loss, frobenius_distance, hps_loss, kl_divergence, C3Input, HpsInput, Matrix};
use dmind3_core::primitives::Selector;
use dmind3_core::router::{enumerate_plans, select_plan, PlanPath};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tiny_keccak::{Hasher, Keccak};

fn keccak_selector(sig: &str) -> [u8; 4] {
    let mut k = Keccak::v256();
    k.update(sig.as_bytes());
    let mut out = [0u8; 32];
    k.finalize(&mut out);
    [out[0], out[1], out[2], out[3]]
}

#[test]
fn registry_selectors_match_reference_keccak() {
    let reg = SelectorRegistry::builtin();
    assert!(!reg.is_empty());
    for e in reg.entries() {
        assert_eq!(e.selector.0, keccak_selector(&e.signature), "{}", e.signature);
    }
    // well-known constants
    assert_eq!(Selector::of_signature("transfer(address,uint256)").0, [0xa9, 0x05, 0x9c, 0xbb]);
    assert_eq!(Selector::of_signature("approve(address,uint256)").0, [0x09, 0x5e, 0xa7, 0xb3]);
}

#[test]
fn arbitrary_signatures_match_reference_keccak() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..2000 {
        let len = rng.gen_range(0..40);
        let s: String = (0..len).map(|_| rng.gen_range(b' '..=b'~') as char).collect();
        assert_eq!(Selector::of_signature(&s).0, keccak_selector(&s));
    }
}

// ---- router ----

#[test]
fn router_matches_brute_force_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut fallbacks = 0;
    let mut chosen = [0usize; 4];
    for i in 0..10_000 {
        let case = common::random_case(&mut rng);
        let plans = enumerate_plans(&case.decision, &case.payload, &case.policy, &case.network);
        let got = select_plan(&plans, &case.policy);
        match common::brute_force(&case, &plans).unwrap_or_else(|e| panic!("case {i}: {e}")) {
            Some(p) => {
                assert_eq!(got.path, p, "case {i}");
                assert!(!got.fallback);
                chosen[common::path_index(p)] += 1;
            }
            None => {
                assert_eq!(got.path, PlanPath::EdgeOnly, "case {i}");
                assert!(got.fallback);
                fallbacks += 1;
            }
        }
    }
    // the sweep must exercise every branch
    assert!(fallbacks > 0);
    assert!(chosen.iter().all(|c| *c > 0), "{chosen:?}");
}

// ---- objectives ----

fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    (0..r).map(|_| (0..c).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect()
}

fn rand_dist(rng: &mut ChaCha8Rng, k: usize, allow_zero: bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k)
        .map(|_| if allow_zero && rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.01..1.0) })
        .collect();
    if v.iter().all(|x| *x == 0.0) {
        v[0] = 1.0;
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

#[test]
fn hps_matches_naive_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let t = rng.gen_range(1..8);
        let m = rng.gen_range(1..5);
        let layers = rng.gen_range(0..4);
        let log_probs: Vec<Vec<f64>> = (0..t).map(|_| (0..m).map(|_| -rng.gen_range(0.0..6.0)).collect()).collect();
        let omega: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..2.0)).collect();
        let shapes: Vec<(usize, usize)> = (0..layers).map(|_| (rng.gen_range(1..4), rng.gen_range(1..4))).collect();
        let theta: Vec<Matrix> = shapes.iter().map(|(r, c)| rand_matrix(&mut rng, *r, *c)).collect();
        let reference: Vec<Matrix> = shapes.iter().map(|(r, c)| rand_matrix(&mut rng, *r, *c)).collect();
        let lambda = rng.gen_range(0.0..3.0);

        let mut expect = 0.0;
        for row in &log_probs {
            for i in 0..m {
                expect += -omega[i] * row[i];
            }
        }
        for (a, b) in theta.iter().zip(&reference) {
            let mut sq = 0.0;
            for i in 0..a.len() {
                for j in 0..a[i].len() {
                    sq += (a[i][j] - b[i][j]).powi(2);
                }
            }
            expect += lambda * sq.sqrt();
        }
        let got = hps_loss(&HpsInput {
            log_probs,
            omega,
            layers_theta: theta,
            layers_ref: reference,
            lambda,
        })
        .unwrap();
        assert!((got - expect).abs() <= 1e-12 * expect.abs().max(1.0), "{got} vs {expect}");
    }
}

#[test]
fn c3_matches_naive_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let t = rng.gen_range(1..10);
        let k = rng.gen_range(1..8);
        let alpha: Vec<f64> = (0..t).map(|_| rng.gen_range(0.0..2.0)).collect();
        let lp: Vec<f64> = (0..t).map(|_| -rng.gen_range(0.0..6.0)).collect();
        let p = rand_dist(&mut rng, k, true);
        let q = rand_dist(&mut rng, k, false);
        let lambda = rng.gen_range(0.0..3.0);

        let mut expect: f64 = alpha.iter().zip(&lp).map(|(a, l)| -a * l).sum();
        let mut kl = 0.0;
        for i in 0..k {
            if p[i] > 0.0 {
                kl += p[i] * (p[i].ln() - q[i].ln());
            }
        }
        expect += lambda * kl;
        let got = c3_loss(&C3Input {
            alpha,
            log_probs_pos: lp,
            pi_theta: p,
            pi_ref: q,
            lambda,
        })
        .unwrap();
        assert!((got - expect).abs() <= 1e-12 * expect.abs().max(1.0), "{got} vs {expect}");
    }
}

#[test]
fn kl_is_nonnegative_and_zero_on_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..5000 {
        let k = rng.gen_range(1..12);
        let p = rand_dist(&mut rng, k, true);
        let q = rand_dist(&mut rng, k, false);
        assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        assert_eq!(kl_divergence(&q, &q).unwrap(), 0.0);
    }
}

#[test]
fn frobenius_matches_hand_values() {
    let a = vec![vec![3.0, 0.0], vec![0.0, 4.0]];
    let z = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
    assert_eq!(frobenius_distance(&a, &z), 5.0);
    assert_eq!(frobenius_distance(&a, &a), 0.0);
}

// ---- percentiles ----

/// Exact rank for `q = a / 1000` in integer arithmetic: `max(1, ceil(a·n / 1000))`.
fn exact_rank(a: u64, n: u64) -> usize {
    (a * n).div_ceil(1000).max(1) as usize
}

#[test]
fn percentiles_match_integer_rank_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..10_000 {
        let n = rng.gen_range(1..300);
        // small value range forces ties
        let samples: Vec<f64> = (0..n).map(|_| rng.gen_range(0..50) as f64 * 0.5).collect();
        let mut qa: Vec<u64> = vec![500, 950, 990];
        qa.push(rng.gen_range(0..=1000));
        let qs: Vec<f64> = qa.iter().map(|a| *a as f64 / 1000.0).collect();
        let got = percentiles(&samples, &qs).unwrap();
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        for (i, a) in qa.iter().enumerate() {
            let r = exact_rank(*a, n as u64);
            assert_eq!(nearest_rank(qs[i], n), r, "q={} n={n}", qs[i]);
            assert_eq!(got[i], sorted[r - 1]);
        }
    }
}
