mod common;

use common::{dense_product, random_matrix, random_sizes};
use dstab_core::gain::apply_scaling;
use dstab_core::squared::{all_blocks, count_selections, enumerate_selections, extract_squared};
use dstab_core::{DMatrix, MixingMatrix, Partition, PartitionedGain, ScalingDiagonal};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn gain_from(seed: u64, m: usize, max_block: usize) -> PartitionedGain {
    let mut rng = StdRng::seed_from_u64(seed);
    let sizes = random_sizes(&mut rng, m, max_block);
    let n = sizes.iter().sum();
    PartitionedGain::new(random_matrix(&mut rng, m, n, -2.0, 2.0), Partition::new(sizes).unwrap()).unwrap()
}

proptest! {
    #[test]
    fn unit_scaling_sums_block_columns(seed in any::<u64>(), m in 1usize..5) {
        let a = gain_from(seed, m, 3);
        let p = a.partition().clone();
        let (got, active) = apply_scaling(&a, &ScalingDiagonal::identity(&p), &MixingMatrix::ones(&p)).unwrap();
        prop_assert!(active.is_full(&p));
        let naive = dense_product(&a, &vec![1.0; p.width()], &vec![1.0; p.width()]);
        prop_assert!((got - naive).norm() <= 1e-14 * (1.0 + a.entries().norm()));
    }

    #[test]
    fn positive_scaling_matches_dense_product(
        seed in any::<u64>(),
        m in 1usize..5,
        e in prop::collection::vec(1e-3f64..1e3, 12),
        k in prop::collection::vec(1e-2f64..5.0, 12),
    ) {
        let a = gain_from(seed, m, 3);
        let p = a.partition().clone();
        let n = p.width();
        let k = k[..n].to_vec();
        let es = ScalingDiagonal::from_flat(&p, e[..n].to_vec()).unwrap();
        let ks = MixingMatrix::from_flat(&p, k.clone()).unwrap();
        let (got, active) = apply_scaling(&a, &es, &ks).unwrap();
        prop_assert!(active.is_full(&p));
        let naive = dense_product(&a, &e[..n], &k);
        for (x, y) in got.iter().zip(naive.iter()) {
            prop_assert!((x - y).abs() <= 1e-12 * naive.norm().max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn zeroed_blocks_leave_the_principal_submatrix(seed in any::<u64>(), m in 2usize..5, dead in 0usize..4) {
        let a = gain_from(seed, m, 3);
        let p = a.partition().clone();
        let dead = dead % m;
        let mut e = vec![1.0; p.width()];
        for c in p.columns(dead).unwrap() {
            e[c] = 0.0;
        }
        let es = ScalingDiagonal::from_flat(&p, e.clone()).unwrap();
        let (got, active) = apply_scaling(&a, &es, &MixingMatrix::ones(&p)).unwrap();
        prop_assert_eq!(active.len(), m - 1);
        let full = dense_product(&a, &e, &vec![1.0; p.width()]);
        let keep: Vec<usize> = (0..m).filter(|&i| i != dead).collect();
        let expected = DMatrix::from_fn(m - 1, m - 1, |i, j| full[(keep[i], keep[j])]);
        prop_assert!((got - expected).norm() <= 1e-14 * (1.0 + full.norm()));
    }

    #[test]
    fn flat_index_round_trip(sizes in prop::collection::vec(1usize..6, 1..6)) {
        let p = Partition::new(sizes.clone()).unwrap();
        for (i, &size) in sizes.iter().enumerate() {
            for j in 0..size {
                let flat = p.flat_index(i, j).unwrap();
                prop_assert_eq!(p.block_offset(flat).unwrap(), (i, j));
            }
        }
        for flat in 0..p.width() {
            let (i, j) = p.block_offset(flat).unwrap();
            prop_assert_eq!(p.flat_index(i, j).unwrap(), flat);
        }
    }

    #[test]
    fn every_column_appears_n_over_p_times(sizes in prop::collection::vec(1usize..4, 1..5)) {
        let p = Partition::new(sizes.clone()).unwrap();
        let total = count_selections(&p, &all_blocks(&p));
        let mut seen = vec![vec![0usize; 0]; sizes.len()];
        for (i, &s) in sizes.iter().enumerate() {
            seen[i] = vec![0; s];
        }
        let mut count = 0;
        for s in enumerate_selections(&p, &all_blocks(&p)) {
            count += 1;
            for (&b, &o) in s.blocks().iter().zip(s.offsets()) {
                seen[b][o] += 1;
            }
        }
        prop_assert_eq!(count, total);
        for (i, row) in seen.iter().enumerate() {
            for &c in row {
                prop_assert_eq!(c, total / sizes[i]);
            }
        }
    }
}

#[test]
fn squared_sum_reproduces_uniform_product() {
    for seed in 0..20 {
        let a = gain_from(seed, 3, 3);
        let p = a.partition().clone();
        let total = count_selections(&p, &all_blocks(&p));
        let mut sum = DMatrix::zeros(3, 3);
        for s in enumerate_selections(&p, &all_blocks(&p)) {
            sum += extract_squared(&a, &s).unwrap();
        }
        let (aek, _) = apply_scaling(&a, &ScalingDiagonal::identity(&p), &MixingMatrix::ones(&p)).unwrap();
        // column i of the sum counts each input of block i exactly N/p_i times
        let scale: Vec<f64> = p.sizes().iter().map(|&s| (total / s) as f64).collect();
        let expected = dstab_core::linalg::scale_columns(&aek, &scale);
        assert!((sum - expected).norm() <= 1e-12 * (1.0 + a.entries().norm()));
    }
}
