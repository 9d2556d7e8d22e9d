#![allow(dead_code)]

use dstab_core::vl::{certify_individual_vl, VlOptions, VlStatus};
use dstab_core::{DMatrix, Partition, PartitionedGain};
use rand::rngs::StdRng;
use rand::Rng;

pub fn random_matrix(rng: &mut StdRng, rows: usize, cols: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

pub fn log_uniform(rng: &mut StdRng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp()
}

/// Diagonal-block entries in [0.5, 2], coupling entries in [-0.8, 0.8]; resampled until certified.
pub fn certified_gain(rng: &mut StdRng, sizes: &[usize]) -> PartitionedGain {
    let partition = Partition::new(sizes.to_vec()).unwrap();
    let m = sizes.len();
    loop {
        let mut entries = DMatrix::zeros(m, partition.width());
        for b in 0..m {
            for c in partition.columns(b).unwrap() {
                for i in 0..m {
                    entries[(i, c)] = if i == b { rng.random_range(0.5..2.0) } else { rng.random_range(-0.8..0.8) };
                }
            }
        }
        let a = PartitionedGain::new(entries, partition.clone()).unwrap();
        if certify_individual_vl(&a, &VlOptions::default()).unwrap().status == VlStatus::Certified {
            return a;
        }
    }
}

pub fn random_sizes(rng: &mut StdRng, m: usize, max: usize) -> Vec<usize> {
    (0..m).map(|_| rng.random_range(1..=max)).collect()
}

/// Product `A·E·K̄` with `E` and `K̄` materialized as dense matrices.
pub fn dense_product(a: &PartitionedGain, e: &[f64], k: &[f64]) -> DMatrix<f64> {
    let p = a.partition();
    let n = p.width();
    let e_mat = DMatrix::from_fn(n, n, |i, j| if i == j { e[i] } else { 0.0 });
    let k_mat = DMatrix::from_fn(n, p.blocks(), |c, i| if p.columns(i).unwrap().contains(&c) { k[c] } else { 0.0 });
    a.entries() * e_mat * k_mat
}
