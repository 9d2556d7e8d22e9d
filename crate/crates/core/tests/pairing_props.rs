mod common;

use common::random_matrix;
use dstab_core::pairing::{
    enumerate_assignments, evaluate_pairing, rank_pairings, surjection_count, PairingAssignment, PairingClass,
};
use dstab_core::squared::{all_blocks, enumerate_selections, extract_squared};
use dstab_core::vl::{certify_individual_vl, verify_certificate, VlOptions, VlStatus};
use dstab_core::{DMatrix, Partition, PartitionedGain};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

/// Brute-force count over all `m^n` owner vectors.
fn brute_surjections(m: usize, n: usize) -> u128 {
    let total = m.pow(n as u32);
    (0..total)
        .filter(|&code| {
            let mut seen = vec![false; m];
            let mut c = code;
            for _ in 0..n {
                seen[c % m] = true;
                c /= m;
            }
            seen.iter().all(|&s| s)
        })
        .count() as u128
}

#[test]
fn counts_match_closed_form() {
    for m in 1..=4 {
        for n in m..=8 {
            let formula = surjection_count(m, n).unwrap();
            assert_eq!(formula, brute_surjections(m, n), "m={m} n={n}");
            let stream = enumerate_assignments(m, n, usize::MAX).unwrap();
            assert!(!stream.truncated());
            let all: Vec<_> = stream.collect();
            assert_eq!(all.len() as u128, formula, "m={m} n={n}");
            assert!(all.windows(2).all(|w| w[0] < w[1]));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn evaluation_equals_certifying_the_permuted_matrix(seed in any::<u64>(), m in 1usize..4, extra in 0usize..3) {
        let mut rng = StdRng::seed_from_u64(seed);
        let n = m + extra;
        let a = random_matrix(&mut rng, m, n, -1.0, 1.0) + DMatrix::from_fn(m, n, |i, j| if j % m == i { 1.5 } else { 0.0 });
        let opts = VlOptions::default();
        for pa in enumerate_assignments(m, n, 50).unwrap() {
            let report = evaluate_pairing(&a, &pa, &opts).unwrap();
            let groups = pa.groups();
            let order: Vec<usize> = groups.concat();
            let permuted = DMatrix::from_fn(m, n, |i, j| a[(i, order[j])]);
            let sizes = groups.iter().map(Vec::len).collect();
            let gain = PartitionedGain::new(permuted, Partition::new(sizes).unwrap()).unwrap();
            let direct = certify_individual_vl(&gain, &opts).unwrap();
            let margins: Vec<f64> = direct.verdicts.iter().map(|(_, v)| v.best_margin).collect();
            prop_assert_eq!(report.margins.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            margins.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(report.vl_status, direct.status);
            prop_assert_eq!(report.margin > 0.0, report.is_feasible());
            if report.class == PairingClass::CertifiedSufficient {
                for ((s, v), &margin) in direct.verdicts.iter().zip(&report.margins) {
                    let sq = extract_squared(&gain, s).unwrap();
                    let cert = v.certificate.as_ref().unwrap();
                    prop_assert!(verify_certificate(&sq, cert.diagonal()).unwrap() > 0.0);
                    prop_assert!(margin > 0.0);
                }
            }
            if let Some(w) = &report.minor {
                let s = enumerate_selections(gain.partition(), &all_blocks(gain.partition())).nth(w.selection).unwrap();
                let sq = extract_squared(&gain, &s).unwrap();
                let sub = DMatrix::from_fn(w.rows.len(), w.rows.len(), |i, j| sq[(w.rows[i], w.rows[j])]);
                prop_assert!(sub.determinant() <= 1e-12);
                prop_assert_eq!(report.class, PairingClass::Refuted);
            }
        }
    }

    #[test]
    fn larger_cap_extends_the_stream(m in 1usize..4, extra in 0usize..4, small in 1usize..20, more in 0usize..40) {
        let n = m + extra;
        let short: Vec<_> = enumerate_assignments(m, n, small).unwrap().collect();
        let long: Vec<_> = enumerate_assignments(m, n, small + more).unwrap().collect();
        prop_assert!(long.len() >= short.len());
        prop_assert_eq!(&long[..short.len()], &short[..]);
    }

    #[test]
    fn ranking_with_larger_cap_is_a_superset(seed in any::<u64>(), small in 1usize..6) {
        let mut rng = StdRng::seed_from_u64(seed);
        let a = random_matrix(&mut rng, 2, 4, -1.0, 1.0);
        let opts = VlOptions::default();
        let short = rank_pairings(&a, small, &opts).unwrap();
        let long = rank_pairings(&a, small + 5, &opts).unwrap();
        for r in &short.reports {
            prop_assert!(long.reports.contains(r));
        }
    }
}

#[test]
fn within_block_order_does_not_change_the_verdict() {
    let mut rng = StdRng::seed_from_u64(17);
    let opts = VlOptions::default();
    for _ in 0..20 {
        let a = random_matrix(&mut rng, 2, 4, -1.0, 1.0)
            + DMatrix::from_fn(2, 4, |i, j| if j % 2 == i { 1.0 } else { 0.0 });
        let p = Partition::new(vec![2, 2]).unwrap();
        let forward = PartitionedGain::new(a.clone(), p.clone()).unwrap();
        let swapped_cols = DMatrix::from_fn(2, 4, |i, j| a[(i, [1, 0, 3, 2][j])]);
        let swapped = PartitionedGain::new(swapped_cols, p).unwrap();
        let f = certify_individual_vl(&forward, &opts).unwrap();
        let s = certify_individual_vl(&swapped, &opts).unwrap();
        assert_eq!(f.status, s.status);
        if f.status == VlStatus::Certified {
            assert!((f.min_margin() - s.min_margin()).abs() <= 1e-9);
        }
    }
}

#[test]
fn pairing_assignment_validates() {
    assert!(PairingAssignment::new(vec![0, 2], 2).is_err());
    assert!(PairingAssignment::new(vec![0], 2).is_err());
    let pa = PairingAssignment::new(vec![0, 1, 0], 2).unwrap();
    assert!(pa.apply(&DMatrix::zeros(2, 2)).is_err());
}
