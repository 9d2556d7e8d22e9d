mod common;

use common::log_uniform;
use dstab_core::weights::{construct_weights, payoff, verify_ratios, WeightProblem, WeightSystem};
use dstab_core::Partition;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn random_problem(rng: &mut StdRng, sizes: &[usize], lo: f64, hi: f64) -> WeightProblem {
    let n: usize = sizes.iter().product();
    let lambdas = sizes.iter().map(|_| (0..n).map(|_| log_uniform(rng, lo, hi)).collect()).collect();
    let ratios = sizes.iter().map(|&p| (1..p).map(|_| log_uniform(rng, lo, hi)).collect()).collect();
    WeightProblem::new(Partition::new(sizes.to_vec()).unwrap(), lambdas, ratios).unwrap()
}

/// Decodes a rank into its tuple (last group fastest) without using the library's strides.
fn tuple(sizes: &[usize], mut rank: usize) -> Vec<usize> {
    let mut out = vec![0; sizes.len()];
    for g in (0..sizes.len()).rev() {
        out[g] = rank % sizes[g];
        rank /= sizes[g];
    }
    out
}

fn brute_payoff(ws: &WeightSystem, wp: &WeightProblem, group: usize, index: usize) -> f64 {
    let sizes = wp.partition().sizes();
    let mut terms: Vec<f64> = (0..ws.len())
        .filter(|&r| tuple(sizes, r)[group] == index)
        .map(|r| ws.gammas()[r] * wp.lambdas()[group][r])
        .collect();
    terms.sort_by(|a, b| b.total_cmp(a));
    terms.iter().sum()
}

fn sizes_strategy() -> impl Strategy<Value = Vec<usize>> {
    (1usize..=4, 1usize..=3, 1usize..=2, 1usize..=3)
        .prop_flat_map(|(a, b, c, d)| (1usize..=4).prop_map(move |len| [a, b, c, d][..len].to_vec()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn construction_is_positive_and_exact(seed in any::<u64>(), sizes in sizes_strategy()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let wp = random_problem(&mut rng, &sizes, 0.1, 10.0);
        let ws = construct_weights(&wp, 1.0).unwrap();
        prop_assert_eq!(ws.len(), sizes.iter().product::<usize>());
        prop_assert!(ws.gammas().iter().all(|&g| g > 0.0 && g.is_finite()));
        prop_assert!(verify_ratios(&ws, &wp).unwrap() < 1e-9);
    }

    #[test]
    fn base_scales_linearly(seed in any::<u64>(), sizes in sizes_strategy(), c in 1e-3f64..1e3) {
        let mut rng = StdRng::seed_from_u64(seed);
        let wp = random_problem(&mut rng, &sizes, 0.1, 10.0);
        let unit = construct_weights(&wp, 1.0).unwrap();
        let scaled = construct_weights(&wp, c).unwrap();
        for (a, b) in unit.gammas().iter().zip(scaled.gammas()) {
            prop_assert!((b - c * a).abs() <= 1e-12 * c * a);
        }
        prop_assert!(verify_ratios(&scaled, &wp).unwrap() < 1e-9);
    }

    #[test]
    fn first_group_holds_termwise(seed in any::<u64>(), sizes in sizes_strategy()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let wp = random_problem(&mut rng, &sizes, 0.1, 10.0);
        let ws = construct_weights(&wp, 1.0).unwrap();
        let tail_count: usize = sizes[1..].iter().product();
        let lam = &wp.lambdas()[0];
        let g = ws.gammas();
        for tail in 0..tail_count {
            let first = g[tail] * lam[tail];
            for j in 1..sizes[0] {
                let r = j * tail_count + tail;
                let expected = wp.ratios()[0][j - 1] * first;
                prop_assert!((g[r] * lam[r] - expected).abs() <= 1e-12 * expected);
            }
        }
    }
}

#[test]
fn payoff_matches_brute_force_on_three_groups() {
    let mut rng = StdRng::seed_from_u64(3);
    let sizes = [3, 2, 3];
    for _ in 0..20 {
        let wp = random_problem(&mut rng, &sizes, 0.1, 10.0);
        let ws = WeightSystem::new((0..18).map(|_| rng.random_range(0.1..10.0)).collect(), 1.0).unwrap();
        for (g, &p) in sizes.iter().enumerate() {
            for j in 0..p {
                let a = payoff(&ws, &wp, g, j).unwrap();
                let b = brute_payoff(&ws, &wp, g, j);
                assert!((a - b).abs() <= 1e-13 * b, "group {g} index {j}: {a} vs {b}");
            }
        }
        assert!(payoff(&ws, &wp, 3, 0).is_err());
        assert!(payoff(&ws, &wp, 1, 2).is_err());
    }
}

#[test]
fn three_group_targets_reproduced_by_brute_force() {
    let mut rng = StdRng::seed_from_u64(5);
    for _ in 0..50 {
        let wp = random_problem(&mut rng, &[3, 2, 3], 0.1, 10.0);
        let ws = construct_weights(&wp, 1.0).unwrap();
        assert_eq!(ws.len(), 18);
        for (g, ratios) in wp.ratios().iter().enumerate() {
            let first = brute_payoff(&ws, &wp, g, 0);
            for (j, &k) in ratios.iter().enumerate() {
                let got = brute_payoff(&ws, &wp, g, j + 1) / first;
                assert!((got - k).abs() <= 1e-9 * k, "group {g} ratio {j}: {got} vs {k}");
            }
        }
    }
}

#[test]
fn perturbation_is_detected() {
    let mut rng = StdRng::seed_from_u64(9);
    let wp = random_problem(&mut rng, &[3, 2, 3], 0.1, 10.0);
    let ws = construct_weights(&wp, 1.0).unwrap();
    assert!(verify_ratios(&ws, &wp).unwrap() < 1e-12);
    let mut g = ws.gammas().to_vec();
    g[4] *= 1.01;
    let bumped = WeightSystem::new(g, ws.base()).unwrap();
    assert!(verify_ratios(&bumped, &wp).unwrap() > 1e-6);
}

#[test]
fn large_problems_stay_finite() {
    let mut rng = StdRng::seed_from_u64(13);
    // 5^6 = 15625 combinations with an extreme dynamic range
    let wp = random_problem(&mut rng, &[5; 6], 1e-4, 1e4);
    let ws = construct_weights(&wp, 1.0).unwrap();
    assert!(ws.gammas().iter().all(|&g| g > 0.0 && g.is_finite()));
    assert!(verify_ratios(&ws, &wp).unwrap() < 1e-9);
}
