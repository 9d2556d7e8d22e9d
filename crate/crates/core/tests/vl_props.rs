mod common;

use common::random_matrix;
use dstab_core::linalg::{max_abs, min_symmetric_eigen};
use dstab_core::vl::{check_column_dominance, check_vl, dual_bound, verify_certificate, VlOptions, VlStatus};
use dstab_core::DMatrix;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn f(m: &DMatrix<f64>, d: &[f64]) -> f64 {
    verify_certificate(m, d).unwrap()
}

/// Grid over `d = (t, 1 − t)` followed by a ternary refinement around the best cell.
fn grid_oracle(m: &DMatrix<f64>, points: usize) -> f64 {
    let g = |t: f64| f(m, &[t, 1.0 - t]);
    let h = 1.0 / (points as f64 + 1.0);
    let (mut best_t, mut best) = (h, g(h));
    for i in 2..=points {
        let t = i as f64 * h;
        let v = g(t);
        if v > best {
            best = v;
            best_t = t;
        }
    }
    let (mut lo, mut hi) = ((best_t - h).max(1e-12), (best_t + h).min(1.0 - 1e-12));
    for _ in 0..100 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if g(a) < g(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    best.max(g(0.5 * (lo + hi)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn margin_is_concave(
        seed in any::<u64>(),
        k in 2usize..5,
        t in 0.0f64..=1.0,
        d1 in prop::collection::vec(1e-3f64..1.0, 4),
        d2 in prop::collection::vec(1e-3f64..1.0, 4),
    ) {
        let mut rng = StdRng::seed_from_u64(seed);
        let m = random_matrix(&mut rng, k, k, -2.0, 2.0);
        let mix: Vec<f64> = d1[..k].iter().zip(&d2[..k]).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let lhs = f(&m, &mix);
        let rhs = t * f(&m, &d1[..k]) + (1.0 - t) * f(&m, &d2[..k]);
        prop_assert!(lhs >= rhs - 1e-10 * (1.0 + lhs.abs().max(rhs.abs())));
    }

    #[test]
    fn verdicts_are_sound_and_scale_invariant(seed in any::<u64>(), k in 1usize..5, c in 1e-3f64..1e3) {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut m = random_matrix(&mut rng, k, k, -1.0, 1.0);
        for i in 0..k {
            m[(i, i)] += rng.random_range(0.0..2.0);
        }
        let opts = VlOptions::default();
        let v = check_vl(&m, &opts).unwrap();
        match v.status {
            VlStatus::Certified => {
                let cert = v.certificate.as_ref().unwrap();
                prop_assert!(cert.diagonal().iter().all(|&d| d > 0.0));
                prop_assert!(f(&m, cert.diagonal()) > 0.0);
            }
            VlStatus::Refuted => {
                let w = v.witness.as_ref().unwrap();
                let y = &w.weights;
                prop_assert!((y.trace() - 1.0).abs() < 1e-9);
                prop_assert!(min_symmetric_eigen(&((y + y.transpose()) * 0.5)).unwrap().0 >= -1e-9);
                prop_assert!(dual_bound(&m, y) <= opts.tol * max_abs(&m) + 1e-12);
            }
            VlStatus::Undecided => {}
        }
        let scaled = check_vl(&(&m * c), &opts).unwrap();
        prop_assert_eq!(scaled.status, v.status);
    }

    #[test]
    fn column_dominance_certifies(seed in any::<u64>(), k in 1usize..6) {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut m = random_matrix(&mut rng, k, k, -1.0, 1.0);
        for j in 0..k {
            let off: f64 = (0..k).filter(|&i| i != j).map(|i| m[(i, j)].abs()).sum();
            m[(j, j)] = off + rng.random_range(0.01..1.0);
        }
        prop_assert!(check_column_dominance(&m).unwrap().dominant);
        prop_assert_eq!(check_vl(&m, &VlOptions::default()).unwrap().status, VlStatus::Certified);
    }
}

#[test]
fn two_by_two_agrees_with_grid() {
    let mut rng = StdRng::seed_from_u64(7);
    let opts = VlOptions::default();
    let mut compared = 0;
    while compared < 100 {
        let m = random_matrix(&mut rng, 2, 2, -1.0, 1.0);
        let oracle = grid_oracle(&m, 20_000);
        if oracle.abs() <= 10.0 * opts.tol * max_abs(&m) {
            continue;
        }
        compared += 1;
        let v = check_vl(&m, &opts).unwrap();
        let expected = if oracle > 0.0 { VlStatus::Certified } else { VlStatus::Refuted };
        assert_eq!(v.status, expected, "m = {m}, oracle = {oracle}");
        assert!(v.best_margin <= v.upper_bound + 1e-12);
        assert!(v.best_margin >= oracle - 1e-9, "search {} below oracle {oracle}", v.best_margin);
    }
}

#[test]
fn lower_triangular_with_positive_diagonal_certifies() {
    let mut rng = StdRng::seed_from_u64(11);
    for k in 2..6 {
        for _ in 0..10 {
            let m = DMatrix::from_fn(k, k, |i, j| match i.cmp(&j) {
                std::cmp::Ordering::Equal => rng.random_range(0.1..2.0),
                std::cmp::Ordering::Greater => rng.random_range(-5.0..5.0),
                std::cmp::Ordering::Less => 0.0,
            });
            assert_eq!(check_vl(&m, &VlOptions::default()).unwrap().status, VlStatus::Certified, "{m}");
        }
    }
}
