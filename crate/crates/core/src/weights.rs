//! Positive combination weights realizing prescribed payoff ratios.
//!
//! Groups `φ = 0..m` have sizes `p_φ`; a combination `κ` picks one index per
//! group and is stored by its lexicographic rank (last group fastest). With
//! positive factors `λ^φ_κ` and weights `γ_κ`, the payoff of index `j` in
//! group `φ` is `P_{φ,j} = Σ_{κ: κ_φ = j} γ_κ λ^φ_κ`. [`construct_weights`]
//! produces `γ > 0` with `P_{φ,j+1} / P_{φ,0} = k^φ_j` for every group and
//! index.
//!
//! The construction walks the groups in ascending order. Every weight is
//! kept as `C_κ · β(tail)`, where the tail is the part of `κ` after the
//! current group. Processing group `g` sums `C_κ λ^g_κ` over the head
//! indices into `A_{j,tail}` and fixes `β(j, tail) = k^g_{j-1} · A_{0,tail} /
//! A_{j,tail} · β(0, tail)`, which satisfies the group's ratios tail by tail
//! and leaves all earlier groups untouched. After the last group only
//! `γ_{(0,…,0)}` is free; it is set to `base`.

use alloc::vec::Vec;

use crate::gain::Partition;
use crate::squared::{all_blocks, count_selections};
use crate::{Error, Result};

/// Above this many combinations the construction runs in log space.
pub const LOG_SPACE_COMBINATIONS: usize = 10_000;
/// Above this max/min ratio of the factors the construction runs in log space.
pub const LOG_SPACE_DYNAMIC_RANGE: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightProblem {
    partition: Partition,
    /// `lambdas[φ][rank]`.
    lambdas: Vec<Vec<f64>>,
    /// `ratios[φ][j]` targets `P_{φ,j+1} / P_{φ,0}`.
    ratios: Vec<Vec<f64>>,
}

impl WeightProblem {
    pub fn new(partition: Partition, lambdas: Vec<Vec<f64>>, ratios: Vec<Vec<f64>>) -> Result<Self> {
        let m = partition.blocks();
        let n = count_selections(&partition, &all_blocks(&partition));
        if lambdas.len() != m || lambdas.iter().any(|l| l.len() != n) {
            return Err(Error::DimensionMismatch {
                what: "lambda table",
                expected: (m, n),
                found: (lambdas.len(), lambdas.first().map_or(0, Vec::len)),
            });
        }
        if ratios.len() != m {
            return Err(Error::DimensionMismatch { what: "ratio targets", expected: (m, 0), found: (ratios.len(), 0) });
        }
        for (g, r) in ratios.iter().enumerate() {
            if r.len() + 1 != partition.sizes()[g] {
                return Err(Error::DimensionMismatch {
                    what: "ratio targets",
                    expected: (g, partition.sizes()[g] - 1),
                    found: (g, r.len()),
                });
            }
        }
        for &v in lambdas.iter().flatten() {
            positive(v, "lambda")?;
        }
        for &v in ratios.iter().flatten() {
            positive(v, "ratio target")?;
        }
        Ok(WeightProblem { partition, lambdas, ratios })
    }

    /// All factors equal to one.
    pub fn with_unit_lambdas(partition: Partition, ratios: Vec<Vec<f64>>) -> Result<Self> {
        let n = count_selections(&partition, &all_blocks(&partition));
        let lambdas = alloc::vec![alloc::vec![1.0; n]; partition.blocks()];
        Self::new(partition, lambdas, ratios)
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn lambdas(&self) -> &[Vec<f64>] {
        &self.lambdas
    }

    pub fn ratios(&self) -> &[Vec<f64>] {
        &self.ratios
    }

    pub fn combinations(&self) -> usize {
        self.lambdas.first().map_or(1, Vec::len)
    }

    /// Whether [`construct_weights`] switches to log space for this problem.
    pub fn needs_log_space(&self) -> bool {
        let (lo, hi) =
            self.lambdas.iter().flatten().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        self.combinations() > LOG_SPACE_COMBINATIONS || hi / lo > LOG_SPACE_DYNAMIC_RANGE
    }

    fn stride(&self, group: usize) -> usize {
        self.partition.sizes()[group + 1..].iter().product()
    }
}

fn positive(v: f64, what: &'static str) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::NonFinite { what });
    }
    if v <= 0.0 {
        return Err(Error::NonPositive { what, value: v });
    }
    Ok(())
}

/// Strictly positive weights indexed by combination rank.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSystem {
    gammas: Vec<f64>,
    base: f64,
}

impl WeightSystem {
    pub fn new(gammas: Vec<f64>, base: f64) -> Result<Self> {
        for &g in &gammas {
            positive(g, "weight")?;
        }
        positive(base, "base weight")?;
        Ok(WeightSystem { gammas, base })
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    /// Value fixed for the all-first combination.
    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }
}

/// `P_{group,index} = Σ_{κ: κ_group = index} γ_κ λ^group_κ`.
pub fn payoff(ws: &WeightSystem, wp: &WeightProblem, group: usize, index: usize) -> Result<f64> {
    let m = wp.partition.blocks();
    if group >= m {
        return Err(Error::IndexOutOfRange { what: "group", index: group, limit: m });
    }
    let p = wp.partition.sizes()[group];
    if index >= p {
        return Err(Error::IndexOutOfRange { what: "group index", index, limit: p });
    }
    if ws.len() != wp.combinations() {
        return Err(Error::DimensionMismatch {
            what: "weight count",
            expected: (wp.combinations(), 1),
            found: (ws.len(), 1),
        });
    }
    let stride = wp.stride(group);
    Ok(ws
        .gammas
        .iter()
        .zip(&wp.lambdas[group])
        .enumerate()
        .filter(|(rank, _)| (rank / stride) % p == index)
        .map(|(_, (g, l))| g * l)
        .sum())
}

/// Builds the weights; `base` is the value of `γ_{(0,…,0)}` (1 by convention).
pub fn construct_weights(wp: &WeightProblem, base: f64) -> Result<WeightSystem> {
    positive(base, "base weight")?;
    let gammas = if wp.needs_log_space() {
        let log_c = log_coefficients(wp);
        let log_base = libm::log(base);
        let gammas: Vec<f64> = log_c.iter().map(|c| libm::exp(c + log_base)).collect();
        if gammas.iter().any(|g| !g.is_finite() || *g <= 0.0) {
            return Err(Error::Overflow);
        }
        gammas
    } else {
        linear_coefficients(wp).into_iter().map(|c| c * base).collect()
    };
    if gammas.iter().any(|g| !g.is_finite() || *g <= 0.0) {
        return Err(Error::Overflow);
    }
    WeightSystem::new(gammas, base)
}

/// Index of `(head, j, tail)` in rank order for group `g` with size `p` and tail length `stride`.
#[inline]
fn at(head: usize, j: usize, tail: usize, p: usize, stride: usize) -> usize {
    (head * p + j) * stride + tail
}

fn linear_coefficients(wp: &WeightProblem) -> Vec<f64> {
    let n = wp.combinations();
    let mut coef = alloc::vec![1.0; n];
    let mut acc = Vec::new();
    for (g, &p) in wp.partition.sizes().iter().enumerate() {
        let stride = wp.stride(g);
        let heads = n / (p * stride);
        let lambda = &wp.lambdas[g];
        for tail in 0..stride {
            acc.clear();
            acc.extend((0..p).map(|j| {
                (0..heads)
                    .map(|h| {
                        let r = at(h, j, tail, p, stride);
                        coef[r] * lambda[r]
                    })
                    .sum::<f64>()
            }));
            for j in 1..p {
                let factor = wp.ratios[g][j - 1] * acc[0] / acc[j];
                for h in 0..heads {
                    coef[at(h, j, tail, p, stride)] *= factor;
                }
            }
        }
    }
    coef
}

fn log_coefficients(wp: &WeightProblem) -> Vec<f64> {
    let n = wp.combinations();
    let mut log_coef = alloc::vec![0.0; n];
    let mut acc = Vec::new();
    let mut terms = Vec::new();
    for (g, &p) in wp.partition.sizes().iter().enumerate() {
        let stride = wp.stride(g);
        let heads = n / (p * stride);
        let lambda = &wp.lambdas[g];
        for tail in 0..stride {
            acc.clear();
            for j in 0..p {
                terms.clear();
                terms.extend((0..heads).map(|h| {
                    let r = at(h, j, tail, p, stride);
                    log_coef[r] + libm::log(lambda[r])
                }));
                acc.push(log_sum_exp(&terms));
            }
            for j in 1..p {
                let shift = libm::log(wp.ratios[g][j - 1]) + acc[0] - acc[j];
                for h in 0..heads {
                    log_coef[at(h, j, tail, p, stride)] += shift;
                }
            }
        }
    }
    log_coef
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top + libm::log(terms.iter().map(|t| libm::exp(t - top)).sum::<f64>())
}

/// Largest relative deviation `|P_{φ,j+1}/P_{φ,0} − k^φ_j| / k^φ_j`.
pub fn verify_ratios(ws: &WeightSystem, wp: &WeightProblem) -> Result<f64> {
    let mut worst = 0.0f64;
    for (g, targets) in wp.ratios.iter().enumerate() {
        let first = payoff(ws, wp, g, 0)?;
        for (j, &k) in targets.iter().enumerate() {
            let ratio = payoff(ws, wp, g, j + 1)? / first;
            worst = worst.max((ratio - k).abs() / k);
        }
    }
    Ok(worst)
}
